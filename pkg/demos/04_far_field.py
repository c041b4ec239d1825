"""
Operating mode from far-field spectra
=====================================

At a distance only the band power near a key-dependent emission survives.
Two simple classifiers on log band power tell "key" from "no key" mode.
"""

import numpy as np

from emleak.attack import classify_mode
from emleak.dsp import band_power
from emleak.synthgen import make_default_mode_model, synth_mode_spectrum

model = make_default_mode_model(excess_ratio=10)
lo, hi = model.band
print(f"key band {lo / 1e9:.3f}-{hi / 1e9:.3f} GHz")

labels = np.array(["key", "no_key"] * 245)
spectra = np.stack([synth_mode_spectrum(m, model, seed) for seed, m in enumerate(labels)])
power = np.array([band_power((model.frequencies, s), lo, hi) for s in spectra])
for mode in ("key", "no_key"):
    p = power[labels == mode]
    print(f"{mode:7s} band power {p.mean():.3g} +- {p.std():.2g}")

res = classify_mode(model.frequencies, spectra[:396], labels[:396], model.band, spectra[396:], labels[396:])
for name, r in res.items():
    print(f"{name}: test accuracy {r['accuracy']:.3f} on {len(labels) - 396} spectra")
