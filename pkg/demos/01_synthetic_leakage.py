"""
Synthetic leakage traces
========================

A random raw key drives a device model: the clock, one waveform per symbol
transition, two radio interferers and white noise. Here we build a trace,
look at its spectrum and at the class-averaged snippets.
"""

import numpy as np

from emleak.core import SYMBOL_NAMES, TraceMeta, generate_key, rms
from emleak.dsp import band_power, bartlett_psd
from emleak.synthgen import leakage_snr_db, make_default_leakage_model, synth_trace

# 10 GSa/s sampling of a 100 MHz symbol clock: 100 samples per symbol
meta = TraceMeta()
key = generate_key(4000, seed=1)
print("first symbols:", "".join(SYMBOL_NAMES[c] for c in key.codes[:20]))
print("symbol counts:", np.bincount(key.codes, minlength=4))

model = make_default_leakage_model(template_seed=7, leakage_strength=1.0, noise_sigma=1.0)
trace = synth_trace(key, model, meta, noise_seed=3)
print(f"{len(trace)} samples, rms {rms(trace.samples):.3f}, leakage SNR {leakage_snr_db(model):.1f} dB")

# Bartlett PSD: clock lines at multiples of 100 MHz, interferers at 0.95 and 2.44 GHz
freqs, psd = bartlett_psd(trace.samples, 10000, meta.sample_rate)
top = np.argsort(psd)[::-1][:6]
print("strongest lines (MHz):", sorted(np.round(freqs[top] / 1e6).astype(int).tolist()))
print(f"power 0.9-1.0 GHz: {band_power((freqs, psd), 0.9e9, 1.0e9):.3f}")

# average 5-symbol windows by their centre symbol: they differ in the middle
# and agree towards the edges, where neighbouring symbols average out
x = trace.samples.reshape(-1, 100)
centres = np.arange(2, len(key) - 2)
avgs = np.array([
    np.mean([x[i - 2:i + 3].ravel() for i in centres[key.codes[centres] == s]], axis=0)
    for s in range(4)
])
spread = avgs.std(axis=0)
print("between-class spread by symbol slot:", np.round(spread.reshape(5, 100).mean(axis=1), 3))
