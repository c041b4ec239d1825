from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    batch_size: int = 128
    epochs: int = 50
    shuffle_seed: int = 0
    patience: int = 10
    shuffle: bool = True

    def __post_init__(self):
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class AdamState:
    """First and second moment estimates, keyed like the parameters."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_step(params: dict, grads: dict, step_count: int, config: TrainConfig, state: AdamState) -> dict:
    """One bias-corrected Adam update; returns the new parameter dict.

    Moments live in ``state`` and follow the parameter dtype.
    """
    if step_count < 1:
        raise ValueError("step_count starts at 1")
    b1, b2, eps, lr = config.adam_beta1, config.adam_beta2, config.adam_epsilon, config.learning_rate
    c1 = 1.0 - b1**step_count
    c2 = 1.0 - b2**step_count
    out = {}
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        else:
            v = state.v[name]
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[name], state.v[name] = m, v
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        out[name] = (p - update).astype(p.dtype) if isinstance(p, np.ndarray) else p - update
    state.step = step_count
    return out
