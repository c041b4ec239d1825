"""Synthetic emission traces with symbol-dependent leakage.

A trace is the sum of four independent parts:

* a clock signal (harmonics of the symbol rate, identical in every symbol),
* leakage: one waveform per symbol, chosen by the (previous, current)
  symbol pair and scaled by ``leakage_strength``,
* narrowband interferers (stand-ins for radio traffic in the room),
* white Gaussian noise.

Only the leakage part depends on the key.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .core import ACC_DTYPE, N_SYMBOLS, SAMPLE_DTYPE, RawKey, Trace, TraceMeta, rms

DEFAULT_HARMONICS = ((1, 1.0, 0.0), (2, 0.3, 0.0), (3, 0.1, 0.0))
# Hz; both well away from the clock harmonics at a 10 GSa/s, 100 MHz preset
DEFAULT_INTERFERER_FREQS = (2.437e9, 0.9476e9)
DEFAULT_INTERFERER_AMPLITUDE = 0.3
MAX_TEMPLATE_CORRELATION = 0.9


@dataclass(frozen=True)
class LeakageModel:
    transition_templates: np.ndarray  # (4, 4, spp): [prev, curr]
    clock_harmonics: tuple = DEFAULT_HARMONICS
    leakage_strength: float = 1.0
    noise_sigma: float = 0.0
    interferers: tuple = ()
    template_seed: int = 0

    def __post_init__(self):
        t = np.asarray(self.transition_templates, dtype=ACC_DTYPE)
        if t.ndim != 3 or t.shape[:2] != (N_SYMBOLS, N_SYMBOLS):
            raise ValueError("transition_templates must have shape (4, 4, samples_per_symbol)")
        if self.noise_sigma < 0 or self.leakage_strength < 0:
            raise ValueError("noise_sigma and leakage_strength must be >= 0")
        t.setflags(write=False)
        object.__setattr__(self, "transition_templates", t)

    @property
    def samples_per_symbol(self) -> int:
        return self.transition_templates.shape[2]

    def interferer_power(self) -> float:
        return float(sum(a * a / 2 for _, a, _ in self.interferers))

    def with_(self, **changes) -> "LeakageModel":
        return replace(self, **changes)


def leakage_snr_db(model: LeakageModel) -> float:
    """Leakage power over key-independent disturbance power, in dB.

    Templates have unit RMS, so the leakage power is ``leakage_strength**2``.
    The disturbance is white noise plus interferers; the clock is excluded
    because it is perfectly predictable.
    """
    signal = model.leakage_strength**2
    disturbance = model.noise_sigma**2 + model.interferer_power()
    if signal == 0:
        return -np.inf
    if disturbance == 0:
        return np.inf
    return float(10 * np.log10(signal / disturbance))


def strength_for_snr_db(snr_db: float, noise_sigma: float, interferer_power: float = 0.0) -> float:
    """Inverse of :func:`leakage_snr_db` for a given disturbance."""
    return float(np.sqrt((noise_sigma**2 + interferer_power) * 10 ** (snr_db / 10)))


def _clean_template(w: np.ndarray, n_harmonics: int) -> np.ndarray:
    # Remove DC and the clock harmonics so that leakage never biases the
    # recovered clock phase; then normalize to unit RMS.
    spec = np.fft.rfft(w)
    spec[: n_harmonics + 1] = 0
    w = np.fft.irfft(spec, n=w.size)
    return w / np.sqrt(np.mean(w * w))


def max_template_correlation(templates: np.ndarray) -> float:
    flat = templates.reshape(-1, templates.shape[-1])
    flat = flat / np.linalg.norm(flat, axis=1, keepdims=True)
    c = np.abs(flat @ flat.T)
    np.fill_diagonal(c, 0)
    return float(c.max())


def make_default_leakage_model(
    template_seed: int,
    leakage_strength: float,
    noise_sigma: float,
    samples_per_symbol: int = 100,
    smoothing: float | None = None,
) -> LeakageModel:
    """Random smooth transition templates plus the default clock and interferers."""
    rng = np.random.default_rng(template_seed)
    sigma = smoothing if smoothing is not None else samples_per_symbol / 40
    n_harm = len(DEFAULT_HARMONICS)
    while True:
        raw = rng.standard_normal((N_SYMBOLS, N_SYMBOLS, samples_per_symbol))
        smooth = gaussian_filter1d(raw, sigma, axis=-1, mode="wrap")
        templates = np.stack(
            [_clean_template(w, n_harm) for w in smooth.reshape(-1, samples_per_symbol)]
        ).reshape(raw.shape)
        if max_template_correlation(templates) < MAX_TEMPLATE_CORRELATION:
            break
    phases = rng.uniform(0, 2 * np.pi, size=len(DEFAULT_INTERFERER_FREQS))
    interferers = tuple(
        (f, DEFAULT_INTERFERER_AMPLITUDE, float(p)) for f, p in zip(DEFAULT_INTERFERER_FREQS, phases)
    )
    return LeakageModel(
        transition_templates=templates,
        clock_harmonics=DEFAULT_HARMONICS,
        leakage_strength=float(leakage_strength),
        noise_sigma=float(noise_sigma),
        interferers=interferers,
        template_seed=int(template_seed),
    )


def clock_waveform(n_samples: int, meta: TraceMeta, harmonics: Sequence) -> np.ndarray:
    n = np.arange(n_samples, dtype=ACC_DTYPE)
    spp = meta.samples_per_symbol
    out = np.zeros(n_samples, dtype=ACC_DTYPE)
    for k, amp, phase in harmonics:
        out += amp * np.sin(2 * np.pi * k * n / spp + phase)
    return out


def synth_components(key: RawKey, model: LeakageModel, meta: TraceMeta, noise_seed: int) -> dict:
    """Float64 parts of a synthetic trace: clock, leakage, interference, noise."""
    spp = meta.samples_per_symbol
    if model.samples_per_symbol != spp:
        raise ValueError(
            f"template length {model.samples_per_symbol} != samples_per_symbol {spp}"
        )
    codes = key.codes.astype(np.intp)
    prev = np.roll(codes, 1)
    n_samples = codes.size * spp
    leak = model.leakage_strength * model.transition_templates[prev, codes].reshape(-1)

    t = np.arange(n_samples, dtype=ACC_DTYPE) / meta.sample_rate
    interf = np.zeros(n_samples, dtype=ACC_DTYPE)
    for f, amp, phase in model.interferers:
        interf += amp * np.sin(2 * np.pi * f * t + phase)

    if model.noise_sigma > 0:
        noise = np.random.default_rng(noise_seed).normal(0.0, model.noise_sigma, n_samples)
    else:
        noise = np.zeros(n_samples, dtype=ACC_DTYPE)
    return {
        "clock": clock_waveform(n_samples, meta, model.clock_harmonics),
        "leakage": leak,
        "interference": interf,
        "noise": noise,
    }


def synth_trace(key: RawKey, model: LeakageModel, meta: TraceMeta, noise_seed: int) -> Trace:
    parts = synth_components(key, model, meta, noise_seed)
    total = parts["clock"] + parts["leakage"] + parts["interference"] + parts["noise"]
    out_meta = TraceMeta(
        sample_rate=meta.sample_rate,
        clock_freq=meta.clock_freq,
        trigger_index=0,
        leakage_strength=model.leakage_strength,
        noise_sigma=model.noise_sigma,
    )
    return Trace(out_meta, total.astype(SAMPLE_DTYPE), key=key, aligned=True)


def snippet_snr_db(key: RawKey, model: LeakageModel, meta: TraceMeta, noise_seed: int) -> float:
    """Measured leakage-to-disturbance power ratio of one realization, in dB."""
    parts = synth_components(key, model, meta, noise_seed)
    disturbance = parts["interference"] + parts["noise"]
    return float(20 * np.log10(rms(parts["leakage"]) / rms(disturbance)))


# --- far-field operating-mode spectra -------------------------------------


@dataclass(frozen=True)
class ModeSpectrumModel:
    frequencies: np.ndarray
    base_spectrum: np.ndarray
    key_band: tuple  # (center Hz, bandwidth Hz, excess density)
    noise_floor: float
    n_averages: int = 16

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=ACC_DTYPE)
        b = np.asarray(self.base_spectrum, dtype=ACC_DTYPE)
        if f.shape != b.shape or f.ndim != 1:
            raise ValueError("frequencies and base_spectrum must be matching 1-d arrays")
        if np.any(b < 0):
            raise ValueError("base_spectrum must be nonnegative")
        center, bw, excess = self.key_band
        if excess < 0:
            raise ValueError("key-band excess power must be >= 0")
        if center - bw / 2 < f[0] or center + bw / 2 > f[-1]:
            raise ValueError("key band lies outside the frequency range")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "base_spectrum", b)

    @property
    def band(self) -> tuple[float, float]:
        center, bw, _ = self.key_band
        return center - bw / 2, center + bw / 2


def make_default_mode_model(
    excess_ratio: float = 10.0,
    noise_floor: float = 1.0,
    n_bins: int = 2001,
    f_max: float = 5e9,
    clock_freq: float = 100e6,
    band_center: float = 1.7e9,
    band_width: float = 40e6,
) -> ModeSpectrumModel:
    """Falling background with clock lines; key band excess = ``excess_ratio`` × floor."""
    f = np.linspace(0, f_max, n_bins)
    base = noise_floor * (1 + 4.0 / (1 + f / 0.5e9))
    df = f[1] - f[0]
    for k in range(1, int(f_max / clock_freq)):
        base += 20 * noise_floor * np.exp(-0.5 * ((f - k * clock_freq) / df) ** 2) / k
    return ModeSpectrumModel(
        frequencies=f,
        base_spectrum=base,
        key_band=(band_center, band_width, excess_ratio * noise_floor),
        noise_floor=noise_floor,
    )


def synth_mode_spectrum(mode: str, model: ModeSpectrumModel, seed: int) -> np.ndarray:
    """One power spectrum of the device in operating mode ``"key"`` or ``"no_key"``.

    Fluctuations follow an averaged periodogram (scaled chi-square with
    ``2 * n_averages`` degrees of freedom) around the mean spectrum.
    """
    if mode not in ("key", "no_key"):
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    mean = model.base_spectrum.copy()
    if mode == "key":
        lo, hi = model.band
        mean[(model.frequencies >= lo) & (model.frequencies <= hi)] += model.key_band[2]
    m = model.n_averages
    fluct = rng.gamma(shape=m, scale=1.0 / m, size=mean.size)
    return mean * fluct
