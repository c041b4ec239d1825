"""Labeled snippets cut from aligned traces.

A snippet is a window of ``window_symbols`` symbols labeled with its center
symbol. Symbols lacking full context at either trace edge are dropped, so an
aligned trace of N symbols yields N - 4 snippets for the default window of 5.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import ACC_DTYPE, SAMPLE_DTYPE, Trace

log = logging.getLogger(__name__)

ROLES = ("train", "validation", "test")


class DegenerateDataError(ValueError):
    pass


class SplitLeakError(ValueError):
    """Raised when a test set would reuse the training key."""


@dataclass(frozen=True)
class SnippetDataset:
    x: np.ndarray  # (n, window_len) float32
    labels: np.ndarray  # (n,) int8 center symbols
    center_index: np.ndarray  # (n,) symbol position within the source trace
    source_index: np.ndarray  # (n,) index into ``sources``
    sources: tuple = ()
    spp: int = 100
    role: str = "train"
    key_seed: int = -1
    norm_mean: Optional[float] = None
    norm_std: Optional[float] = None
    offsets: Optional[np.ndarray] = None  # sample shift of each window (augmentation)
    n_dropped: int = 0
    train_key_seed: Optional[int] = field(default=None, repr=False)

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}")
        n = len(self.labels)
        for name in ("x", "center_index", "source_index"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length differs from labels")
        if self.offsets is None:
            object.__setattr__(self, "offsets", np.zeros(n, dtype=np.int16))
        if self.role == "test" and self.train_key_seed is not None:
            if self.train_key_seed == self.key_seed:
                raise SplitLeakError(
                    f"test dataset reuses the training key (seed {self.key_seed})"
                )

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def window_len(self) -> int:
        return self.x.shape[1]

    @property
    def normalized(self) -> bool:
        return self.norm_mean is not None


def snippetize(
    trace: Trace,
    window_symbols: int = 5,
    role: str = "train",
    source: Optional[str] = None,
) -> SnippetDataset:
    """Cut every full-context window from an aligned trace.

    Without a key (the attack phase) labels are -1.
    """
    if not trace.aligned:
        raise ValueError("trace must be aligned before snippetizing")
    if window_symbols < 1 or window_symbols % 2 == 0:
        raise ValueError("window_symbols must be a positive odd integer")
    spp = trace.meta.samples_per_symbol
    n_seq = trace.n_symbols if trace.key is None else min(trace.n_symbols, len(trace.key))
    half = window_symbols // 2
    win = window_symbols * spp
    centers = np.arange(half, n_seq - half, dtype=np.int64)
    if centers.size:
        starts = (centers - half) * spp
        x = _cut(trace.samples, starts, win)
    else:
        x = np.empty((0, win), dtype=SAMPLE_DTYPE)
    return SnippetDataset(
        x=x,
        labels=trace.key.codes[centers].copy() if trace.key is not None else np.full(centers.size, -1, np.int8),
        center_index=centers,
        source_index=np.zeros(centers.size, dtype=np.int32),
        sources=(source or trace.name or "trace0",),
        spp=spp,
        role=role,
        key_seed=trace.key.seed if trace.key is not None else -1,
    )


def _cut(samples: np.ndarray, starts: np.ndarray, width: int) -> np.ndarray:
    view = np.lib.stride_tricks.sliding_window_view(samples, width)
    return np.ascontiguousarray(view[starts], dtype=SAMPLE_DTYPE)


def combine_measurements(traces: Sequence[Trace], window_symbols: int = 5, role: str = "train") -> SnippetDataset:
    """Concatenate snippets from several recordings of the same key."""
    if not traces:
        raise ValueError("no traces given")
    key0 = traces[0].key
    for t in traces[1:]:
        if t.key != key0:
            raise ValueError("all combined traces must share the same key")
    parts = [
        snippetize(t, window_symbols, role=role, source=t.name or f"trace{i}")
        for i, t in enumerate(traces)
    ]
    return _concat(parts, role)


def _concat(parts: Sequence[SnippetDataset], role: str) -> SnippetDataset:
    sources, src_idx = [], []
    for p in parts:
        src_idx.append(p.source_index + len(sources))
        sources.extend(p.sources)
    return SnippetDataset(
        x=np.concatenate([p.x for p in parts]),
        labels=np.concatenate([p.labels for p in parts]),
        center_index=np.concatenate([p.center_index for p in parts]),
        source_index=np.concatenate(src_idx).astype(np.int32),
        sources=tuple(sources),
        spp=parts[0].spp,
        role=role,
        key_seed=parts[0].key_seed,
        norm_mean=parts[0].norm_mean,
        norm_std=parts[0].norm_std,
        offsets=np.concatenate([p.offsets for p in parts]),
        n_dropped=sum(p.n_dropped for p in parts),
    )


def fit_normalizer(datasets: Sequence[SnippetDataset] | SnippetDataset) -> tuple[float, float]:
    """Global mean and standard deviation over the training snippets.

    Validation and test datasets passed alongside are ignored for fitting;
    the returned statistics are then applied to every split.
    """
    if isinstance(datasets, SnippetDataset):
        datasets = [datasets]
    train = [d for d in datasets if d.role == "train" and len(d)]
    if not train:
        raise ValueError("no non-empty training dataset to fit on")
    total = sum(d.x.size for d in train)
    s = sum(np.sum(d.x, dtype=ACC_DTYPE) for d in train)
    mean = s / total
    ss = sum(np.sum((d.x.astype(ACC_DTYPE) - mean) ** 2) for d in train)
    std = float(np.sqrt(ss / total))
    if not std > 0:
        raise DegenerateDataError("training snippets have zero variance")
    return float(mean), std


def normalize(ds: SnippetDataset, stats: Optional[tuple[float, float]] = None) -> SnippetDataset:
    """Apply ``(x - mean) / std``; fits on ``ds`` itself when ``stats`` is None."""
    mean, std = stats if stats is not None else fit_normalizer(replace(ds, role="train"))
    x = ((ds.x.astype(ACC_DTYPE) - mean) / std).astype(SAMPLE_DTYPE)
    if ds.normalized:
        # compose so the stored statistics still map raw samples to x
        mean, std = ds.norm_mean + ds.norm_std * mean, ds.norm_std * std
    return replace(ds, x=x, norm_mean=float(mean), norm_std=float(std))


def augment_shifts(
    ds: SnippetDataset,
    source_traces: Sequence[Trace],
    max_shift: int = 3,
) -> SnippetDataset:
    """Add copies of every snippet re-cut ``±1..±max_shift`` samples away.

    Copies that would run past either end of the source trace are dropped;
    their number is recorded in ``n_dropped``. Labels are unchanged.
    """
    if ds.role != "train":
        raise ValueError("only training data is augmented")
    if max_shift < 0:
        raise ValueError("max_shift must be >= 0")
    if max_shift == 0:
        return ds
    if len(source_traces) != len(ds.sources):
        raise ValueError("source_traces must match the dataset's sources one-to-one")
    half = (ds.window_len // ds.spp) // 2
    win = ds.window_len
    shifts = [s for k in range(1, max_shift + 1) for s in (-k, k)]
    xs, labels, centers, srcs, offs = [ds.x], [ds.labels], [ds.center_index], [ds.source_index], [ds.offsets]
    dropped = 0
    for si, trace in enumerate(source_traces):
        sel = np.flatnonzero(ds.source_index == si)
        if not sel.size:
            continue
        base = (ds.center_index[sel] - half) * ds.spp + ds.offsets[sel]
        for s in shifts:
            starts = base + s
            ok = (starts >= 0) & (starts + win <= len(trace))
            dropped += int((~ok).sum())
            keep = sel[ok]
            x = _cut(trace.samples, starts[ok], win)
            if ds.normalized:
                x = ((x.astype(ACC_DTYPE) - ds.norm_mean) / ds.norm_std).astype(SAMPLE_DTYPE)
            xs.append(x)
            labels.append(ds.labels[keep])
            centers.append(ds.center_index[keep])
            srcs.append(ds.source_index[keep])
            offs.append(ds.offsets[keep] + s)
    if dropped:
        log.info("augment_shifts dropped %d edge copies", dropped)
    return replace(
        ds,
        x=np.concatenate(xs),
        labels=np.concatenate(labels),
        center_index=np.concatenate(centers),
        source_index=np.concatenate(srcs),
        offsets=np.concatenate(offs).astype(np.int16),
        n_dropped=ds.n_dropped + dropped,
    )


def check_split(train: SnippetDataset, test: SnippetDataset) -> None:
    """Refuse a test set recorded with the training key."""
    if test.key_seed == train.key_seed:
        raise SplitLeakError(f"test key seed {test.key_seed} equals training key seed")


def build_splits(
    train_traces: Sequence[Trace],
    val_trace: Trace,
    test_traces: Sequence[Trace] = (),
    window_symbols: int = 5,
    max_shift: int = 0,
) -> tuple[SnippetDataset, SnippetDataset, list[SnippetDataset]]:
    """Normalized train / validation / test datasets under the attacker model.

    Training and validation share one key; each test trace must use another.
    Normalization statistics come from the (unaugmented) training snippets.
    """
    train_key = train_traces[0].key
    if val_trace.key != train_key:
        raise ValueError("validation trace must use the training key")
    for t in test_traces:
        if t.key == train_key or t.key.seed == train_key.seed:
            raise SplitLeakError("test trace reuses the training key")
    train = combine_measurements(train_traces, window_symbols, role="train")
    stats = fit_normalizer(train)
    if max_shift:
        train = augment_shifts(train, train_traces, max_shift)
    train = normalize(train, stats)
    val = normalize(snippetize(val_trace, window_symbols, role="validation"), stats)
    tests = [
        normalize(
            replace(snippetize(t, window_symbols, role="test"), train_key_seed=train_key.seed),
            stats,
        )
        for t in test_traces
    ]
    return train, val, tests
