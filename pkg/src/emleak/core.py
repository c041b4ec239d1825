"""Domain types shared by every stage of the attack pipeline.

Symbols are encoded as small integers (H=0, V=1, P=2, M=3). The encoding is
part of the on-disk formats and must never change.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

SAMPLE_DTYPE = np.float32
ACC_DTYPE = np.float64

N_SYMBOLS = 4


class Symbol(enum.IntEnum):
    H = 0
    V = 1
    P = 2
    M = 3


SYMBOL_NAMES = tuple(s.name for s in Symbol)


def encode_symbols(symbols: Sequence) -> np.ndarray:
    """Map symbols (``Symbol``, names or ints) to an int8 code array."""
    out = np.empty(len(symbols), dtype=np.int8)
    for i, s in enumerate(symbols):
        if isinstance(s, str):
            out[i] = Symbol[s]
        else:
            out[i] = Symbol(int(s))
    return out


def decode_symbols(codes) -> list[Symbol]:
    return [Symbol(int(c)) for c in np.asarray(codes).ravel()]


@dataclass(frozen=True)
class RawKey:
    """Sequence of raw-key symbols stored as int8 codes 0..3."""

    codes: np.ndarray
    seed: int = -1

    def __post_init__(self):
        codes = np.ascontiguousarray(self.codes, dtype=np.int8)
        if codes.ndim != 1 or codes.size == 0:
            raise ValueError("raw key must be a non-empty 1-d sequence")
        if codes.min() < 0 or codes.max() >= N_SYMBOLS:
            raise ValueError("symbol codes must lie in 0..3")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    def __len__(self) -> int:
        return self.codes.size

    @property
    def symbols(self) -> list[Symbol]:
        return decode_symbols(self.codes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RawKey):
            return NotImplemented
        return np.array_equal(self.codes, other.codes)

    def __hash__(self) -> int:
        return hash(self.codes.tobytes())


def generate_key(length: int, seed: int) -> RawKey:
    """Uniform i.i.d. raw key from a counter-based generator (Philox).

    Philox output is specified bit-for-bit, so the key for a given
    ``(length, seed)`` is the same on every platform and numpy version.
    """
    if length < 1:
        raise ValueError("key length must be >= 1")
    bitgen = np.random.Philox(key=np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    raw = bitgen.random_raw(length)
    codes = (raw >> np.uint64(62)).astype(np.int8)
    return RawKey(codes, seed=int(seed))


@dataclass(frozen=True)
class TraceMeta:
    sample_rate: float = 10e9
    clock_freq: float = 100e6
    trigger_index: Optional[int] = None
    leakage_strength: float = 0.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.sample_rate <= 0 or self.clock_freq <= 0:
            raise ValueError("sample_rate and clock_freq must be positive")
        ratio = self.sample_rate / self.clock_freq
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise ValueError("sample_rate must be an integer multiple of clock_freq")

    @property
    def samples_per_symbol(self) -> int:
        return int(round(self.sample_rate / self.clock_freq))


@dataclass(frozen=True)
class Trace:
    meta: TraceMeta
    samples: np.ndarray
    key: Optional[RawKey] = None
    aligned: bool = False
    name: str = field(default="", compare=False)

    def __post_init__(self):
        s = np.ascontiguousarray(self.samples, dtype=SAMPLE_DTYPE)
        if s.ndim != 1:
            raise ValueError("trace samples must be 1-d")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def n_symbols(self) -> int:
        return self.samples.size // self.meta.samples_per_symbol

    def with_samples(self, samples, **changes) -> "Trace":
        return replace(self, samples=samples, **changes)


def rms(samples) -> float:
    x = np.asarray(samples, dtype=ACC_DTYPE)
    if x.size == 0:
        raise ValueError("rms of an empty series")
    return float(np.sqrt(np.mean(x * x)))


def significance_threshold(n_test: int, p: float = 0.25, n_sigma: float = 3.0) -> float:
    """Accuracy a guesser must beat by ``n_sigma`` binomial standard deviations."""
    if n_test <= 0:
        raise ValueError("n_test must be positive")
    return p + n_sigma * np.sqrt(p * (1 - p) / n_test)
