"""Experiment configs and the figure pipelines (sweeps, data volume, far field).

All sub-seeds derive from one master seed by fixed offsets, so a config
file pins every random draw.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, fields

import numpy as np

from .attack import AttackConfig, attack_trace, classify_mode, run_profiled_attack, train_attacker
from .core import Trace, TraceMeta, generate_key, rms
from .io import dump_config, parse_config
from .nn.model import FAST_ARCH, PAPER_ARCH
from .nn.optim import TrainConfig
from .synthgen import (
    LeakageModel,
    leakage_snr_db,
    make_default_leakage_model,
    make_default_mode_model,
    synth_mode_spectrum,
    synth_trace,
)

log = logging.getLogger(__name__)

# offsets from the master seed
TEMPLATE_SEED = 1
TRAIN_KEY_SEED = 100
TEST_KEY_SEED = 200
NOISE_SEED = 1000
DELAY_SEED = 1500
MODEL_SEED = 2000
SHUFFLE_SEED = 3000
SPECTRUM_SEED = 5000


@dataclass
class ExperimentConfig:
    preset: str = "fast"
    seed: int = 0
    key_length: int = 10000
    sample_rate: float = 10e9
    clock_freq: float = 100e6
    noise_sigma: float = 1.0
    leakage_strength: float = 3.3
    leakage_sweep: tuple = (3.3, 1.0, 0.33, 0.1, 0.033, 0.01)
    n_train_traces: int = 2
    n_test_traces: int = 3
    window_symbols: int = 5
    max_shift: int = 0
    arch: str = "fast"
    epochs: int = 10
    batch_size: int = 128
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    patience: int = 3
    clock_bandwidth: float = 0.1  # fraction of clock_freq
    random_delay: bool = True
    psd_segment_length: int = 100000
    datavolume_max_traces: int = 4
    datavolume_test_traces: int = 5
    farfield_train: int = 396
    farfield_test: int = 94
    farfield_excess: float = 10.0
    output_dir: str = "out"

    # -- derived ---------------------------------------------------------

    @property
    def meta(self) -> TraceMeta:
        return TraceMeta(sample_rate=self.sample_rate, clock_freq=self.clock_freq)

    def sub_seed(self, offset: int, index: int = 0) -> int:
        return self.seed + offset + index

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_epsilon=self.adam_epsilon,
            batch_size=self.batch_size,
            epochs=self.epochs,
            shuffle_seed=self.sub_seed(SHUFFLE_SEED),
            patience=self.patience,
        )

    def attack_config(self) -> AttackConfig:
        arch = {"fast": FAST_ARCH, "paper": PAPER_ARCH}[self.arch]
        return AttackConfig(
            arch=arch,
            train=self.train_config(),
            window_symbols=self.window_symbols,
            max_shift=self.max_shift,
            model_seed=self.sub_seed(MODEL_SEED),
        )

    def leakage_model(self, leakage_strength: float | None = None) -> LeakageModel:
        spp = self.meta.samples_per_symbol
        strength = self.leakage_strength if leakage_strength is None else leakage_strength
        return make_default_leakage_model(self.sub_seed(TEMPLATE_SEED), strength, self.noise_sigma, spp)

    # -- serialization ---------------------------------------------------

    def to_text(self) -> str:
        return dump_config(dataclasses.asdict(self))

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ExperimentConfig":
        raw = parse_config(text)
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(raw)

    @classmethod
    def from_mapping(cls, raw: dict) -> "ExperimentConfig":
        base = preset(raw.get("preset", "fast"))
        kw = {}
        known = {f.name: f for f in fields(cls)}
        for k, v in raw.items():
            if k not in known:
                raise ValueError(f"unknown config key {k!r}")
            kw[k] = _coerce(getattr(base, k), v)
        return dataclasses.replace(base, **kw)


def _coerce(default, value):
    if not isinstance(value, str):
        return tuple(value) if isinstance(default, tuple) else value
    if isinstance(default, bool):
        if value.lower() not in ("true", "false", "1", "0"):
            raise ValueError(f"not a boolean: {value!r}")
        return value.lower() in ("true", "1")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        return tuple(float(x) for x in value.split(",") if x.strip())
    return value


def preset(name: str) -> ExperimentConfig:
    """``fast``: reduced network for CI; ``paper``: full network, 7 traces, 7x augmentation."""
    if name == "fast":
        return ExperimentConfig()
    if name == "paper":
        return ExperimentConfig(
            preset="paper",
            key_length=20000,
            n_train_traces=7,
            max_shift=3,
            arch="paper",
            epochs=50,
            patience=10,
            datavolume_max_traces=7,
        )
    raise ValueError(f"unknown preset {name!r}")


# --- trace sets ------------------------------------------------------------


@dataclass
class TraceSet:
    train: list
    val: Trace
    tests: list
    model: LeakageModel


def _delayed(trace: Trace, delay: int) -> Trace:
    """Simulate a recording that starts ``delay`` samples into the key."""
    meta = dataclasses.replace(trace.meta, trigger_index=(-delay) % len(trace))
    return dataclasses.replace(trace, samples=np.roll(trace.samples, -delay), meta=meta, aligned=False)


def make_traces(
    cfg: ExperimentConfig,
    leakage_strength: float | None = None,
    n_train: int | None = None,
    n_test: int | None = None,
    delayed: bool = False,
) -> TraceSet:
    """Training, validation and test traces for one leakage setting.

    Training and validation share the training key; all test traces are
    independent recordings of a second key. Noise seeds do not depend on
    the leakage strength, so sweeps differ only in the leakage amplitude.
    """
    model = cfg.leakage_model(leakage_strength)
    meta = cfg.meta
    n_train = cfg.n_train_traces if n_train is None else n_train
    n_test = cfg.n_test_traces if n_test is None else n_test
    k_train = generate_key(cfg.key_length, cfg.sub_seed(TRAIN_KEY_SEED))
    k_test = generate_key(cfg.key_length, cfg.sub_seed(TEST_KEY_SEED))
    delay_rng = np.random.default_rng(cfg.sub_seed(DELAY_SEED))

    def one(key, noise_index, name):
        t = synth_trace(key, model, meta, cfg.sub_seed(NOISE_SEED, noise_index))
        t = dataclasses.replace(t, name=name)
        if delayed:
            t = _delayed(t, int(delay_rng.integers(0, len(t))))
        return t

    train = [one(k_train, i, f"train_{i}") for i in range(n_train)]
    val = one(k_train, 100, "val")
    tests = [one(k_test, 200 + i, f"test_{i}") for i in range(n_test)]
    return TraceSet(train, val, tests, model)


# --- pipelines -------------------------------------------------------------


def sweep(cfg: ExperimentConfig, strengths=None, results: list | None = None) -> list[dict]:
    """Accuracy versus leakage strength; each test trace is attacked on its own.

    Pass a list as ``results`` to also collect each point's AttackResult.
    """
    strengths = cfg.leakage_sweep if strengths is None else strengths
    if not len(strengths):
        raise ValueError("empty leakage sweep")
    rows = []
    for s in strengths:
        ts = make_traces(cfg, s)
        res = run_profiled_attack(ts.train, ts.val, ts.tests, cfg.attack_config())
        if results is not None:
            results.append(res)
        accs = [r.accuracy for r in res.reports]
        row = {
            "leakage_strength": float(s),
            "snr_db": leakage_snr_db(ts.model),
            "rms": float(np.mean([rms(t.samples) for t in ts.tests])),
            "n_test": res.reports[0].n_test,
            "significance_threshold": res.reports[0].significance_threshold,
            "mean_accuracy": float(np.mean(accs)),
        }
        for i, a in enumerate(accs):
            row[f"accuracy_{i + 1}"] = a
        row["val_accuracy"] = max(h["val_accuracy"] for h in res.history)
        rows.append(row)
        log.info("sweep %s", row)
    return rows


def datavolume(cfg: ExperimentConfig, counts=None) -> list[dict]:
    """Validation and test accuracy versus the number of training traces."""
    counts = range(1, cfg.datavolume_max_traces + 1) if counts is None else counts
    counts = list(counts)
    ts = make_traces(cfg, n_train=max(counts), n_test=cfg.datavolume_test_traces)
    rows = []
    for n in counts:
        net, history = train_attacker(ts.train[:n], ts.val, cfg.attack_config())
        accs = [attack_trace(net, t, cfg.window_symbols)[0].accuracy for t in ts.tests]
        row = {
            "n_train_traces": n,
            "val_accuracy": max(h["val_accuracy"] for h in history),
            "mean_test_accuracy": float(np.mean(accs)),
        }
        for i, a in enumerate(accs):
            row[f"test_accuracy_{i + 1}"] = a
        rows.append(row)
        log.info("datavolume %s", row)
    return rows


def farfield(cfg: ExperimentConfig) -> dict:
    """Key / no-key mode classification from synthetic far-field spectra.

    Modes alternate within each dataset, as in the measurement protocol.
    """
    model = make_default_mode_model(excess_ratio=cfg.farfield_excess)
    n_tr, n_te = cfg.farfield_train, cfg.farfield_test
    labels = np.array(["key" if i % 2 == 0 else "no_key" for i in range(n_tr + n_te)])
    base = cfg.sub_seed(SPECTRUM_SEED)
    spectra = np.stack([synth_mode_spectrum(m, model, base + i) for i, m in enumerate(labels)])
    res = classify_mode(
        model.frequencies, spectra[:n_tr], labels[:n_tr], model.band, spectra[n_tr:], labels[n_tr:]
    )
    return {
        "n_train": n_tr,
        "n_test": n_te,
        "band_lo": model.band[0],
        "band_hi": model.band[1],
        "excess_ratio": cfg.farfield_excess,
        "nearest_centroid_accuracy": res["nearest_centroid"]["accuracy"],
        "knn_accuracy": res["knn"]["accuracy"],
    }
