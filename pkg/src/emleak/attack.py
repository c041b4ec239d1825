"""Profiled attack orchestration and leakage metrics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import N_SYMBOLS, SYMBOL_NAMES, RawKey, Symbol, Trace, significance_threshold
from .dataset import SplitLeakError, build_splits
from .dsp import align_by_correlation, band_power, estimate_clock_phase
from .nn import NO_PREDICTION, Network, TrainConfig, build_paper_architecture, cross_entropy, predict_key, train
from .nn.model import FAST_ARCH, PAPER_ARCH, ArchSpec

log = logging.getLogger(__name__)


@dataclass
class EvalReport:
    n_test: int
    n_correct: int
    accuracy: float
    significance_threshold: float
    significant: bool
    confusion: np.ndarray  # rows true, columns predicted
    mean_cross_entropy: float = float("nan")
    probabilities: Optional[np.ndarray] = field(default=None, repr=False)

    CSV_FIELDS = ("n_test", "n_correct", "accuracy", "significance_threshold", "significant", "mean_cross_entropy")

    def csv_row(self) -> dict:
        row = {k: getattr(self, k) for k in self.CSV_FIELDS}
        for i, t in enumerate(SYMBOL_NAMES):
            for j, p in enumerate(SYMBOL_NAMES):
                row[f"conf_{t}{p}"] = int(self.confusion[i, j])
        return row


def evaluate(predicted, true_key, probabilities=None) -> EvalReport:
    """Accuracy, significance verdict and confusion matrix of a key prediction.

    Positions whose prediction is ``NO_PREDICTION`` are excluded.
    """
    pred = np.asarray(predicted, dtype=np.int64)
    true = true_key.codes if isinstance(true_key, RawKey) else np.asarray(true_key)
    true = true.astype(np.int64)
    if pred.shape != true.shape:
        raise ValueError("predicted and true sequences differ in length")
    keep = pred != NO_PREDICTION
    pred, true = pred[keep], true[keep]
    n = int(pred.size)
    if n == 0:
        raise ValueError("nothing to evaluate (n_test = 0)")
    conf = np.zeros((N_SYMBOLS, N_SYMBOLS), dtype=np.int64)
    np.add.at(conf, (true, pred), 1)
    n_correct = int(np.trace(conf))
    acc = n_correct / n
    thr = significance_threshold(n)
    ce = float("nan")
    probs = None
    if probabilities is not None:
        probs = np.asarray(probabilities)[keep]
        ce = cross_entropy(probs, true)
    return EvalReport(
        n_test=n,
        n_correct=n_correct,
        accuracy=acc,
        significance_threshold=thr,
        significant=bool(acc > thr),
        confusion=conf,
        mean_cross_entropy=ce,
        probabilities=probs,
    )


def confusion_to_sequences(confusion) -> tuple[np.ndarray, np.ndarray]:
    """Expand a 4x4 count matrix into (predicted, true) code sequences."""
    conf = np.asarray(confusion, dtype=np.int64)
    true = np.repeat(np.repeat(np.arange(N_SYMBOLS), N_SYMBOLS), conf.ravel())
    pred = np.repeat(np.tile(np.arange(N_SYMBOLS), N_SYMBOLS), conf.ravel())
    return pred, true


# --- bits, blocking ---------------------------------------------------------


@dataclass(frozen=True)
class BitMapping:
    """Balanced symbol-to-bit assignment, given by the two symbols meaning 0."""

    zeros: frozenset

    def __post_init__(self):
        z = frozenset(Symbol(int(s)) if not isinstance(s, str) else Symbol[s] for s in self.zeros)
        if len(z) != 2:
            raise ValueError("exactly two symbols must map to bit 0")
        object.__setattr__(self, "zeros", z)

    @classmethod
    def of(cls, *zeros) -> "BitMapping":
        return cls(frozenset(zeros))

    def bits(self) -> np.ndarray:
        return np.array([0 if Symbol(s) in self.zeros else 1 for s in range(N_SYMBOLS)])


HP_VM = BitMapping.of("H", "P")
HV_PM = BitMapping.of("H", "V")
HM_VP = BitMapping.of("H", "M")


def bit_accuracy(confusion, mapping: BitMapping) -> float:
    """Fraction of predictions landing on the right bit after sifting."""
    conf = np.asarray(confusion, dtype=np.int64)
    total = conf.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    b = mapping.bits()
    same = b[:, None] == b[None, :]
    return float(conf[same].sum() / total)


@dataclass(frozen=True)
class BlockingPolicy:
    per_symbol_quota: int = 50
    keep_fraction: float = 0.01

    @classmethod
    def for_fraction(cls, keep_fraction: float, n_test: int) -> "BlockingPolicy":
        if not 0 < keep_fraction <= 1:
            raise ValueError("keep_fraction must lie in (0, 1]")
        return cls(max(1, int(round(keep_fraction * n_test / N_SYMBOLS))), keep_fraction)


@dataclass
class BlockingResult:
    indices: np.ndarray
    per_class: dict  # symbol code -> selected indices
    shortfall: dict  # symbol code -> how many short of the quota
    never_predicted: list

    @property
    def complete(self) -> bool:
        return not self.never_predicted and not any(self.shortfall.values())


def selective_blocking(probabilities, policy: BlockingPolicy) -> BlockingResult:
    """Keep the ``quota`` most confident predictions of each symbol.

    A snippet counts towards the symbol it is predicted as (its argmax), so
    no index is selected twice. Rows of NaN (no prediction) are skipped.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    valid = ~np.isnan(p).any(axis=1)
    arg = np.full(len(p), -1)
    arg[valid] = p[valid].argmax(axis=1)
    per_class, shortfall, never = {}, {}, []
    for s in range(N_SYMBOLS):
        cand = np.flatnonzero(arg == s)
        if cand.size == 0:
            never.append(Symbol(s))
        order = cand[np.argsort(-p[cand, s], kind="stable")]
        chosen = order[: policy.per_symbol_quota]
        per_class[s] = chosen
        shortfall[s] = policy.per_symbol_quota - chosen.size
    idx = np.concatenate([per_class[s] for s in range(N_SYMBOLS)]).astype(np.int64)
    return BlockingResult(idx, per_class, shortfall, never)


def restricted_accuracy(predicted, true_key, indices) -> float:
    pred = np.asarray(predicted)[indices]
    true = (true_key.codes if isinstance(true_key, RawKey) else np.asarray(true_key))[indices]
    return float(np.mean(pred == true)) if len(indices) else float("nan")


def partial_knowledge_accuracy(known_fraction: float) -> float:
    """Accuracy when a fraction of symbols is known and the rest is guessed."""
    if not 0 <= known_fraction <= 1:
        raise ValueError("known_fraction must lie in [0, 1]")
    return known_fraction + (1 - known_fraction) * 0.25


def loss_budget_fraction(optical_loss_db: float) -> float:
    """Fraction of pulses an attacker may pass while mimicking the channel loss."""
    if optical_loss_db < 0:
        raise ValueError("optical loss must be >= 0 dB")
    return 10 ** (-optical_loss_db / 10)


# --- far-field mode classification -----------------------------------------


class ClassifierDegenerateError(ValueError):
    pass


def mode_features(frequencies, spectra, band) -> np.ndarray:
    """Log band power of each spectrum."""
    f_lo, f_hi = band
    return np.array([np.log(band_power((frequencies, s), f_lo, f_hi)) for s in np.atleast_2d(spectra)])


def classify_mode(frequencies, train_spectra, train_labels, band, test_spectra, test_labels=None, k: int = 5) -> dict:
    """Nearest-centroid and k-nearest-neighbour classification on log band power.

    Labels are strings (``"key"``/``"no_key"``) or any hashable values.
    Returns ``{classifier: {"predicted": array, "accuracy": float|None}}``.
    """
    freqs = np.asarray(frequencies)
    if band[0] < freqs[0] or band[1] > freqs[-1]:
        raise ValueError("band lies outside the spectral range")
    y = np.asarray(train_labels)
    classes = np.unique(y)
    for c in classes:
        if (y == c).sum() < 2:
            raise ValueError(f"need at least two training spectra of class {c!r}")
    xtr = mode_features(freqs, train_spectra, band)
    xte = mode_features(freqs, test_spectra, band)
    centroids = np.array([xtr[y == c].mean() for c in classes])
    if np.ptp(xtr) == 0 or np.unique(centroids).size < classes.size:
        raise ClassifierDegenerateError("training features do not separate the classes")

    nc = classes[np.argmin(np.abs(xte[:, None] - centroids[None, :]), axis=1)]

    kk = min(k, xtr.size)
    d = np.abs(xte[:, None] - xtr[None, :])
    nearest = np.argsort(d, axis=1, kind="stable")[:, :kk]
    votes = np.stack([(y[nearest] == c).sum(axis=1) for c in classes], axis=1)
    knn = classes[np.argmax(votes, axis=1)]

    out = {}
    for name, pred in (("nearest_centroid", nc), ("knn", knn)):
        acc = None if test_labels is None else float(np.mean(pred == np.asarray(test_labels)))
        out[name] = {"predicted": pred, "accuracy": acc}
    return out


# --- the two-phase attack --------------------------------------------------


@dataclass
class AttackConfig:
    arch: ArchSpec = PAPER_ARCH
    train: TrainConfig = field(default_factory=TrainConfig)
    window_symbols: int = 5
    max_shift: int = 3
    model_seed: int = 0


FAST_ATTACK = AttackConfig(
    arch=FAST_ARCH,
    train=TrainConfig(epochs=10, patience=3, batch_size=128),
    max_shift=0,
)


@dataclass
class AttackResult:
    network: Network
    history: list
    reports: list
    predictions: list = field(default_factory=list, repr=False)


def train_attacker(train_traces: Sequence[Trace], val_trace: Trace, config: AttackConfig):
    """Profiling phase: fit the classifier on traces of the training key."""
    train_ds, val_ds, _ = build_splits(
        train_traces, val_trace, (), config.window_symbols, config.max_shift
    )
    window_len = train_ds.window_len
    net = build_paper_architecture(window_len, config.arch, seed=config.model_seed)
    return train(net, train_ds, val_ds, config.train)


def attack_trace(net: Network, test_trace: Trace, window_symbols: int = 5) -> tuple[EvalReport, np.ndarray, np.ndarray]:
    """Attack phase on one aligned trace; the true key is used only for scoring."""
    codes, probs = predict_key(net, replace(test_trace, key=None), window_symbols)
    n = min(len(codes), len(test_trace.key))
    report = evaluate(codes[:n], test_trace.key.codes[:n], probs[:n])
    return report, codes, probs


def attack_untriggered(net: Network, test_trace: Trace, window_symbols: int = 5):
    """Attack a trace whose key start is unknown.

    The clock phase fixes symbol boundaries; the absolute start is recovered
    afterwards by correlating the prediction with the true key.
    Returns ``(report, best_shift, match_fraction)``.
    """
    spp = test_trace.meta.samples_per_symbol
    est = estimate_clock_phase(test_trace)
    start = int(round(est.phase_offset)) % spp
    rolled = replace(test_trace, samples=np.roll(test_trace.samples, -start), key=None, aligned=True)
    codes, probs = predict_key(net, rolled, window_symbols)
    shift, frac = align_by_correlation(codes, test_trace.key)
    true = np.roll(test_trace.key.codes, shift)
    return evaluate(codes, true, probs), shift, frac


def run_profiled_attack(
    train_traces: Sequence[Trace],
    val_trace: Trace,
    test_traces: Trace | Sequence[Trace],
    config: AttackConfig = FAST_ATTACK,
) -> AttackResult:
    """Train on the profiling traces, then attack each test trace separately."""
    if isinstance(test_traces, Trace):
        test_traces = [test_traces]
    train_key = train_traces[0].key
    for t in test_traces:
        if t.key == train_key:
            raise SplitLeakError("test trace reuses the training key")
    net, history = train_attacker(train_traces, val_trace, config)
    reports, preds = [], []
    for t in test_traces:
        rep, codes, probs = attack_trace(net, t, config.window_symbols)
        reports.append(rep)
        preds.append((codes, probs))
    return AttackResult(net, history, reports, preds)
