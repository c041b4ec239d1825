"""Clock recovery, trace synchronization and spectral estimation."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import norm

from .core import ACC_DTYPE, N_SYMBOLS, RawKey, Trace, encode_symbols, rms, significance_threshold

MIN_CLOCK_QUALITY = 0.05


class ClockNotFoundError(RuntimeError):
    pass


@dataclass(frozen=True)
class ClockEstimate:
    phase_offset: float
    quality: float


def bandpass(samples, center_freq: float, bandwidth: float, sample_rate: float) -> np.ndarray:
    """Zero-phase band-pass by frequency-domain masking.

    Unit gain within ``center ± bandwidth/2``, a raised-cosine roll-off of
    width ``bandwidth/4`` on either side, zero gain beyond.
    """
    nyq = sample_rate / 2
    if not 0 < center_freq < nyq:
        raise ValueError(f"center_freq {center_freq} outside (0, {nyq})")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    x = np.asarray(samples, dtype=ACC_DTYPE)
    if x.size == 0:
        return x.copy()
    f = np.fft.rfftfreq(x.size, d=1.0 / sample_rate)
    dist = np.abs(f - center_freq)
    half = bandwidth / 2
    edge = bandwidth / 4
    mask = np.zeros_like(f)
    mask[dist <= half] = 1.0
    ramp = (dist > half) & (dist < half + edge)
    mask[ramp] = 0.5 * (1 + np.cos(np.pi * (dist[ramp] - half) / edge))
    return np.fft.irfft(np.fft.rfft(x) * mask, n=x.size)


def estimate_clock_phase(trace: Trace, bandwidth: float | None = None) -> ClockEstimate:
    """Locate symbol boundaries from the recovered clock fundamental.

    Phase 0 is a rising zero crossing of the fundamental. ``bandwidth``
    defaults to 10 % of the clock frequency.
    """
    meta = trace.meta
    spp = meta.samples_per_symbol
    if len(trace) <= 10 * spp:
        raise ValueError("trace must span more than 10 symbols")
    bw = 0.1 * meta.clock_freq if bandwidth is None else bandwidth
    x = np.asarray(trace.samples, dtype=ACC_DTYPE)
    y = bandpass(x, meta.clock_freq, bw, meta.sample_rate)
    w = 2 * np.pi * meta.clock_freq / meta.sample_rate
    n = np.arange(y.size, dtype=ACC_DTYPE)
    in_phase = np.dot(y, np.cos(w * n))
    quad = np.dot(y, np.sin(w * n))
    # y ~ A sin(w n + phi)  =>  quad ~ A cos(phi) N/2, in_phase ~ A sin(phi) N/2
    phi = np.arctan2(in_phase, quad)
    amplitude = 2 * np.hypot(in_phase, quad) / y.size
    total = rms(x)
    quality = 0.0 if total == 0 else min(1.0, amplitude / np.sqrt(2) / total)
    if quality < MIN_CLOCK_QUALITY:
        raise ClockNotFoundError(f"clock quality {quality:.4f} below {MIN_CLOCK_QUALITY}")
    offset = (-phi / w) % spp
    if offset >= spp:  # float rounding at the wrap point
        offset = 0.0
    return ClockEstimate(phase_offset=float(offset), quality=float(quality))


def align_by_trigger(trace: Trace, bandwidth: float | None = None) -> Trace:
    """Rotate a trace so that sample 0 is the first sample of key symbol 0.

    The trigger gives the coarse start; the clock phase snaps it to the
    nearest symbol boundary. The sender repeats its key cyclically, so
    rotation (not truncation) keeps the full symbol count.
    """
    if trace.meta.trigger_index is None:
        raise ValueError("trace has no trigger_index; use align_by_correlation instead")
    spp = trace.meta.samples_per_symbol
    trig = int(trace.meta.trigger_index)
    est = estimate_clock_phase(trace, bandwidth)
    delta = (est.phase_offset - trig) % spp
    if delta >= spp / 2:
        delta -= spp
    start = int(round(trig + delta))
    samples = np.roll(trace.samples, -start)
    meta = replace(trace.meta, trigger_index=0)
    return replace(trace, meta=meta, samples=samples, aligned=True)


def correlation_profile(predicted, true_key) -> np.ndarray:
    """Match fraction for every circular shift ``s`` of the true key.

    Entry ``s`` counts positions with ``predicted[i] == true[i - s]``.
    """
    p = _codes(predicted)
    t = _codes(true_key)
    if p.size != t.size:
        raise ValueError(f"length mismatch: {p.size} predicted vs {t.size} true")
    n = p.size
    counts = np.zeros(n, dtype=ACC_DTYPE)
    for s in range(N_SYMBOLS):
        a = np.fft.rfft((p == s).astype(ACC_DTYPE))
        b = np.fft.rfft((t == s).astype(ACC_DTYPE))
        counts += np.fft.irfft(a * np.conj(b), n=n)
    return np.rint(counts) / n


def align_by_correlation(predicted, true_key) -> tuple[int, float]:
    """Circular shift of the true key that best matches the prediction.

    Ties resolve to the smallest shift.
    """
    prof = correlation_profile(predicted, true_key)
    best = int(np.argmax(prof))
    return best, float(prof[best])


def shift_significance_threshold(n: int, n_shifts: int | None = None, n_sigma: float = 3.0) -> float:
    """Match fraction the best of ``n_shifts`` null shifts exceeds with 3-sigma rarity.

    A shift search takes the maximum over ``n_shifts`` nearly independent
    binomial proportions, so the single-test threshold would be crossed by
    chance about ``n_shifts * 0.00135`` times. The per-shift tail is Sidak
    corrected to keep the family-wise false-alarm rate at the one-sided
    ``n_sigma`` level.
    """
    n_shifts = n if n_shifts is None else n_shifts
    family_tail = norm.sf(n_sigma)
    per_shift = -np.expm1(np.log1p(-family_tail) / n_shifts)
    z = norm.isf(per_shift)
    return float(significance_threshold(n, n_sigma=z))


def shift_is_significant(match_fraction: float, n: int, n_shifts: int | None = None) -> bool:
    """Whether the best shift of a search over ``n_shifts`` shifts beats chance."""
    return match_fraction > shift_significance_threshold(n, n_shifts)


def _codes(x) -> np.ndarray:
    if isinstance(x, RawKey):
        return x.codes
    arr = np.asarray(x)
    if arr.dtype.kind in "iu":
        return arr.astype(np.int8)
    return encode_symbols(list(x))


def bartlett_psd(samples, segment_length: int, sample_rate: float) -> tuple[np.ndarray, np.ndarray]:
    """One-sided PSD averaged over non-overlapping rectangular segments.

    Leftover samples beyond the last full segment are ignored.
    """
    x = np.asarray(samples, dtype=ACC_DTYPE)
    if segment_length <= 0 or segment_length > x.size:
        raise ValueError(f"segment_length must lie in 1..{x.size}")
    n_seg = x.size // segment_length
    segs = x[: n_seg * segment_length].reshape(n_seg, segment_length)
    spec = np.fft.rfft(segs, axis=1)
    pxx = (spec.real**2 + spec.imag**2).sum(axis=0) / n_seg
    pxx /= sample_rate * segment_length
    # fold negative frequencies; DC and (even-length) Nyquist appear once
    if segment_length % 2 == 0:
        pxx[1:-1] *= 2
    else:
        pxx[1:] *= 2
    freqs = np.fft.rfftfreq(segment_length, d=1.0 / sample_rate)
    return freqs, pxx


def band_power(psd: tuple, f_lo: float, f_hi: float) -> float:
    """Trapezoidal integral of a PSD between ``f_lo`` and ``f_hi``."""
    freqs, dens = psd
    if not f_lo < f_hi:
        raise ValueError("f_lo must be below f_hi")
    sel = (freqs >= f_lo) & (freqs <= f_hi)
    if sel.sum() < 2:
        raise ValueError(f"band [{f_lo}, {f_hi}] contains fewer than two frequency bins")
    return float(trapezoid(dens[sel], freqs[sel]))
