"""Profiled single-trace attacks on electromagnetic leakage of a symbol-emitting device.

Modules: ``core`` (keys, traces), ``synthgen`` (synthetic leakage oracle),
``dsp`` (filtering, clock recovery, alignment, PSD), ``dataset``
(snippets, normalization, splits), ``nn`` (numpy CNN), ``attack``
(orchestration and metrics), ``io`` (file formats), ``cli``.
"""

from .core import RawKey, Symbol, Trace, TraceMeta, generate_key, rms, significance_threshold

__version__ = "0.1.0"

__all__ = ["RawKey", "Symbol", "Trace", "TraceMeta", "generate_key", "rms", "significance_threshold"]
