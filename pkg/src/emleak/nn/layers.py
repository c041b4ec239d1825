"""Numpy layers with hand-written backward passes.

Activations use the (batch, length, channels) layout. Every layer caches
what its backward pass needs during ``forward``; ``backward`` returns the
gradient with respect to the layer input and stores parameter gradients in
``self.grads``. Layers work in whatever float dtype their inputs carry.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from ._kernels import gelu_backward32, gelu_forward32

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _cdf(x):
    c = erf(x * (1.0 / _SQRT2))
    c += 1.0
    c *= 0.5
    return c


def gelu(x):
    """Exact GeLU, x * Phi(x)."""
    return x * _cdf(x)


def _gelu_fwd(z):
    """GeLU output and the normal CDF (kept for the backward pass)."""
    if z.dtype == np.float32:
        return gelu_forward32(z)
    c = _cdf(z)
    return z * c, c


def _gelu_bwd(g, z, cdf):
    if z.dtype == np.float32:
        return gelu_backward32(g, z, cdf)
    return g * gelu_grad(z, cdf)


def gelu_grad(x, cdf=None):
    if cdf is None:
        cdf = _cdf(x)
    pdf = np.exp(-0.5 * x * x)
    pdf *= x
    pdf *= _INV_SQRT_2PI
    return pdf + cdf


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Layer:
    kind = "layer"
    params: dict
    state: dict

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.state = {}

    def output_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def forward(self, x, train: bool = False, rng=None, stochastic: bool = True):
        raise NotImplementedError

    def backward(self, g):
        raise NotImplementedError

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values()) + sum(s.size for s in self.state.values())

    def config(self) -> dict:
        return {"kind": self.kind}

    def astype(self, dtype):
        for d in (self.params, self.state):
            for k in d:
                d[k] = d[k].astype(dtype)
        return self


class GaussianNoise(Layer):
    kind = "gaussian_noise"

    def __init__(self, sigma: float):
        super().__init__()
        self.sigma = sigma

    def forward(self, x, train=False, rng=None, stochastic=True):
        if train and stochastic and self.sigma > 0:
            return x + rng.normal(0.0, self.sigma, size=x.shape).astype(x.dtype)
        return x

    def backward(self, g):
        return g

    def config(self):
        return {"kind": self.kind, "sigma": self.sigma}


class Activation(Layer):
    """Element-wise activation; only used to test GeLU in isolation."""

    kind = "activation"

    def __init__(self, activation: str = "gelu"):
        super().__init__()
        self.activation = activation

    def forward(self, x, train=False, rng=None, stochastic=True):
        self._x = x
        return gelu(x) if self.activation == "gelu" else x

    def backward(self, g):
        return g * gelu_grad(self._x) if self.activation == "gelu" else g

    def config(self):
        return {"kind": self.kind, "activation": self.activation}


class Conv1D(Layer):
    """Dilated 1-d convolution with zero "same" padding and optional GeLU."""

    kind = "conv1d"

    def __init__(self, in_channels, channels, kernel_size, dilation=1, activation="gelu"):
        super().__init__()
        self.in_channels = in_channels
        self.channels = channels
        self.kernel_size = kernel_size
        self.dilation = dilation
        self.activation = activation
        self.input_grad = True  # the network switches this off for its first layer
        self.params = {
            "kernel": np.zeros((kernel_size, in_channels, channels), dtype=np.float32),
            "bias": np.zeros(channels, dtype=np.float32),
        }

    @property
    def extent(self) -> int:
        return (self.kernel_size - 1) * self.dilation + 1

    def output_shape(self, in_shape):
        length, c = in_shape
        if c != self.in_channels:
            raise ValueError(f"conv expects {self.in_channels} channels, got {c}")
        return (length, self.channels)

    def forward(self, x, train=False, rng=None, stochastic=True):
        b, n, c = x.shape
        k, d = self.kernel_size, self.dilation
        pad = self.extent - 1
        left = pad // 2
        xp = np.zeros((b, n + pad, c), dtype=x.dtype)
        xp[:, left : left + n] = x
        s0, s1, s2 = xp.strides
        cols = np.lib.stride_tricks.as_strided(
            xp, shape=(b, n, k, c), strides=(s0, s1, d * s1, s2), writeable=False
        )
        cols = cols.reshape(b * n, k * c)
        w = self.params["kernel"].reshape(k * c, self.channels)
        z = cols @ w
        z += self.params["bias"]
        z = z.reshape(b, n, self.channels)
        self._cols, self._shape, self._z = cols, x.shape, z
        if self.activation != "gelu":
            return z
        out, self._cdf = _gelu_fwd(z)
        return out

    def backward(self, g):
        b, n, c = self._shape
        k, d = self.kernel_size, self.dilation
        if self.activation == "gelu":
            g = _gelu_bwd(g, self._z, self._cdf)
        g2 = g.reshape(b * n, self.channels)
        self.grads["kernel"] = (self._cols.T @ g2).reshape(self.params["kernel"].shape)
        self.grads["bias"] = g2.sum(axis=0)
        self._cols = None
        if not self.input_grad:
            return None
        pad = self.extent - 1
        left = pad // 2
        g3 = g2.reshape(b, n, self.channels)
        w = self.params["kernel"]
        dxp = np.zeros((b, n + pad, c), dtype=g.dtype)
        for j in range(k):
            dxp[:, j * d : j * d + n] += g3 @ w[j].T
        return dxp[:, left : left + n]

    def config(self):
        return {
            "kind": self.kind,
            "in_channels": self.in_channels,
            "channels": self.channels,
            "kernel_size": self.kernel_size,
            "dilation": self.dilation,
            "activation": self.activation,
        }


class MaxPool1D(Layer):
    """Non-overlapping max pooling; a trailing remainder is discarded."""

    kind = "max_pool1d"

    def __init__(self, pool_size: int):
        super().__init__()
        self.pool_size = pool_size

    def output_shape(self, in_shape):
        length, c = in_shape
        if length // self.pool_size < 1:
            raise ValueError("pooling leaves no samples")
        return (length // self.pool_size, c)

    def forward(self, x, train=False, rng=None, stochastic=True):
        p = self.pool_size
        if p == 1:
            return x
        b, n, c = x.shape
        m = n // p
        blocks = x[:, : m * p].reshape(b, m, p, c)
        idx = blocks.argmax(axis=2)
        self._idx, self._shape = idx, x.shape
        return np.take_along_axis(blocks, idx[:, :, None, :], axis=2)[:, :, 0, :]

    def backward(self, g):
        p = self.pool_size
        if p == 1:
            return g
        b, n, c = self._shape
        m = n // p
        dblocks = np.zeros((b, m, p, c), dtype=g.dtype)
        np.put_along_axis(dblocks, self._idx[:, :, None, :], g[:, :, None, :], axis=2)
        dx = np.zeros(self._shape, dtype=g.dtype)
        dx[:, : m * p] = dblocks.reshape(b, m * p, c)
        return dx

    def config(self):
        return {"kind": self.kind, "pool_size": self.pool_size}


class SpatialDropout1D(Layer):
    """Drops whole channels in training; survivors are rescaled by 1/(1-rate)."""

    kind = "spatial_dropout1d"

    def __init__(self, rate: float):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate

    def forward(self, x, train=False, rng=None, stochastic=True):
        if not (train and stochastic and self.rate > 0):
            self._mask = None
            return x
        keep = rng.random((x.shape[0], 1, x.shape[2])) >= self.rate
        self._mask = (keep / (1.0 - self.rate)).astype(x.dtype)
        return x * self._mask

    def backward(self, g):
        return g if self._mask is None else g * self._mask

    def config(self):
        return {"kind": self.kind, "rate": self.rate}


class BatchNorm(Layer):
    """Per-channel batch normalization over batch and length axes."""

    kind = "batch_norm"

    def __init__(self, channels: int, momentum: float = 0.99, eps: float = 1e-3):
        super().__init__()
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.params = {
            "gamma": np.ones(channels, dtype=np.float32),
            "beta": np.zeros(channels, dtype=np.float32),
        }
        self.state = {
            "moving_mean": np.zeros(channels, dtype=np.float32),
            "moving_var": np.ones(channels, dtype=np.float32),
        }

    def output_shape(self, in_shape):
        if in_shape[-1] != self.channels:
            raise ValueError(f"batch norm expects {self.channels} channels")
        return in_shape

    def forward(self, x, train=False, rng=None, stochastic=True):
        axes = tuple(range(x.ndim - 1))
        gamma, beta = self.params["gamma"], self.params["beta"]
        if not train:
            inv = 1.0 / np.sqrt(self.state["moving_var"] + self.eps)
            scale = (gamma * inv).astype(x.dtype)
            shift = (beta - self.state["moving_mean"] * gamma * inv).astype(x.dtype)
            return x * scale + shift
        mean = x.mean(axis=axes)
        xhat = x - mean
        var = np.mean(xhat * xhat, axis=axes)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat *= inv
        self._xhat, self._inv = xhat, inv
        m = self.momentum
        st = self.state
        st["moving_mean"] = (m * st["moving_mean"] + (1 - m) * mean).astype(st["moving_mean"].dtype)
        st["moving_var"] = (m * st["moving_var"] + (1 - m) * var).astype(st["moving_var"].dtype)
        return xhat * gamma + beta

    def backward(self, g):
        axes = tuple(range(g.ndim - 1))
        xhat, inv = self._xhat, self._inv
        self.grads["gamma"] = (g * xhat).sum(axis=axes)
        self.grads["beta"] = g.sum(axis=axes)
        gx = g * self.params["gamma"]
        return inv * (gx - gx.mean(axis=axes) - xhat * (gx * xhat).mean(axis=axes))

    def config(self):
        return {"kind": self.kind, "channels": self.channels, "momentum": self.momentum, "eps": self.eps}


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train=False, rng=None, stochastic=True):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g):
        return g.reshape(self._shape)


class Dense(Layer):
    """Fully connected layer; ``softmax`` output is handled by the loss."""

    kind = "dense"

    def __init__(self, in_features, units, activation="gelu"):
        super().__init__()
        self.in_features = in_features
        self.units = units
        self.activation = activation
        self.params = {
            "kernel": np.zeros((in_features, units), dtype=np.float32),
            "bias": np.zeros(units, dtype=np.float32),
        }

    def output_shape(self, in_shape):
        if in_shape != (self.in_features,):
            raise ValueError(f"dense expects ({self.in_features},), got {in_shape}")
        return (self.units,)

    def forward(self, x, train=False, rng=None, stochastic=True):
        self._x = x
        z = x @ self.params["kernel"] + self.params["bias"]
        self._z = z
        if self.activation == "gelu":
            out, self._cdf = _gelu_fwd(z)
            return out
        if self.activation == "softmax":
            return softmax(z)
        return z

    def logits(self, x):
        self._x = x
        self._z = x @ self.params["kernel"] + self.params["bias"]
        return self._z

    def backward(self, g):
        """``g`` is d(loss)/d(output); for softmax layers it must already be d/d(logits)."""
        if self.activation == "gelu":
            g = _gelu_bwd(g, self._z, self._cdf)
        self.grads["kernel"] = self._x.T @ g
        self.grads["bias"] = g.sum(axis=0)
        return g @ self.params["kernel"].T

    def config(self):
        return {"kind": self.kind, "in_features": self.in_features, "units": self.units, "activation": self.activation}


LAYER_TYPES = {
    cls.kind: cls
    for cls in (GaussianNoise, Activation, Conv1D, MaxPool1D, SpatialDropout1D, BatchNorm, Flatten, Dense)
}


def layer_from_config(cfg: dict) -> Layer:
    cfg = dict(cfg)
    cls = LAYER_TYPES[cfg.pop("kind")]
    return cls(**cfg)
