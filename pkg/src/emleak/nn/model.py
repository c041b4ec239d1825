"""The snippet classifier: layer chain, initialization, loss and gradients."""

from __future__ import annotations

import copy
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .layers import (
    BatchNorm,
    Conv1D,
    Dense,
    Flatten,
    GaussianNoise,
    Layer,
    MaxPool1D,
    SpatialDropout1D,
    layer_from_config,
    softmax,
)

N_CLASSES = 4
PROB_CLIP = 1e-7
OUTPUT_INIT_GAIN = 0.1


class NumericFailure(FloatingPointError):
    def __init__(self, layer_index: int, message: str = ""):
        super().__init__(f"non-finite values after layer {layer_index}{': ' + message if message else ''}")
        self.layer_index = layer_index


@dataclass(frozen=True)
class ArchSpec:
    """Widths of the four learned stages; everything else is fixed."""

    conv_channels: tuple = (13, 118, 100)
    kernel_sizes: tuple = (3, 15, 5)
    dilations: tuple = (1, 2, 4)
    pool_sizes: tuple = (2, 1, 4)
    dense_units: int = 224
    dropout: float = 0.25
    input_noise: float = 0.1


PAPER_ARCH = ArchSpec()
FAST_ARCH = ArchSpec(conv_channels=(4, 16, 16), dense_units=64)


def architecture_layers(arch: ArchSpec, window_len: int = 500) -> list[Layer]:
    c1, c2, c3 = arch.conv_channels
    (k1, k2, k3), (d1, d2, d3), (p1, p2, p3) = arch.kernel_sizes, arch.dilations, arch.pool_sizes
    length = window_len
    for p in (p1, p2, p3):
        length //= p
    if length < 1:
        raise ValueError(f"window_len {window_len} does not survive the pooling chain")
    r = arch.dropout
    return [
        GaussianNoise(arch.input_noise),
        Conv1D(1, c1, k1, d1),
        MaxPool1D(p1),
        SpatialDropout1D(r),
        BatchNorm(c1),
        Conv1D(c1, c2, k2, d2),
        MaxPool1D(p2),
        SpatialDropout1D(r),
        BatchNorm(c2),
        Conv1D(c2, c3, k3, d3),
        MaxPool1D(p3),
        BatchNorm(c3),
        SpatialDropout1D(r),
        Flatten(),
        Dense(length * c3, arch.dense_units, "gelu"),
        Dense(arch.dense_units, N_CLASSES, "softmax"),
    ]


class Network:
    """Sequential classifier mapping (batch, window_len) snippets to 4 class probabilities."""

    def __init__(self, layers: list[Layer], window_len: int, rng_seed: int = 0):
        self.layers = layers
        self.window_len = window_len
        self.rng_seed = rng_seed
        self.norm_mean: float | None = None
        self.norm_std: float | None = None
        self.shapes = self._check_shapes()
        first = next((l for l in layers if l.params), None)
        if isinstance(first, Conv1D):
            first.input_grad = False

    def _check_shapes(self) -> list[tuple]:
        shape: tuple = (self.window_len,)
        shapes = []
        for layer in self.layers:
            if isinstance(layer, Conv1D) and len(shape) == 1:
                shape = (shape[0], 1)
            shape = layer.output_shape(shape)
            shapes.append(shape)
        if shape != (N_CLASSES,):
            raise ValueError(f"network output shape {shape}, expected ({N_CLASSES},)")
        return shapes

    # -- parameters -------------------------------------------------------

    def init_params(self, seed: int | None = None) -> "Network":
        """Uniform fan-in scaled weights and zero biases.

        GeLU layers get the He limit sqrt(6/fan_in). The output layer gets
        0.1 * sqrt(3/fan_in): its inputs are GeLU outputs with positive mean,
        and a full-scale init would start from strongly unequal class scores.
        """
        rng = np.random.default_rng(self.rng_seed if seed is None else seed)
        for layer in self.layers:
            if isinstance(layer, (Conv1D, Dense)):
                w = layer.params["kernel"]
                fan_in = int(np.prod(w.shape[:-1]))
                if layer.activation == "gelu":
                    limit = np.sqrt(6.0 / fan_in)
                else:
                    limit = OUTPUT_INIT_GAIN * np.sqrt(3.0 / fan_in)
                layer.params["kernel"] = rng.uniform(-limit, limit, size=w.shape).astype(w.dtype)
                layer.params["bias"] = np.zeros_like(layer.params["bias"])
        return self

    def named_params(self) -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict()
        for i, layer in enumerate(self.layers):
            for k, v in layer.params.items():
                out[f"{i}.{layer.kind}.{k}"] = v
        return out

    def named_state(self) -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict()
        for i, layer in enumerate(self.layers):
            for k, v in layer.state.items():
                out[f"{i}.{layer.kind}.{k}"] = v
        return out

    def named_tensors(self) -> "OrderedDict[str, np.ndarray]":
        """Trainable and non-trainable tensors in layer order (checkpoint order)."""
        out = OrderedDict()
        for i, layer in enumerate(self.layers):
            for d in (layer.params, layer.state):
                for k, v in d.items():
                    out[f"{i}.{layer.kind}.{k}"] = v
        return out

    def set_tensor(self, name: str, value: np.ndarray) -> None:
        idx, _, key = name.split(".", 2)
        layer = self.layers[int(idx)]
        target = layer.params if key in layer.params else layer.state
        if target[key].shape != value.shape:
            raise ValueError(f"{name}: shape {value.shape} != expected {target[key].shape}")
        target[key] = value.astype(target[key].dtype)

    def update_params(self, new: dict) -> None:
        for name, v in new.items():
            self.set_tensor(name, v)

    def param_counts(self) -> list[int]:
        return [layer.param_count() for layer in self.layers]

    def total_params(self) -> int:
        return sum(self.param_counts())

    def astype(self, dtype) -> "Network":
        for layer in self.layers:
            layer.astype(dtype)
        return self

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def config(self) -> list[dict]:
        return [layer.config() for layer in self.layers]

    @classmethod
    def from_config(cls, cfg: list[dict], window_len: int, rng_seed: int = 0) -> "Network":
        return cls([layer_from_config(c) for c in cfg], window_len, rng_seed)

    # -- computation ------------------------------------------------------

    @property
    def dtype(self):
        for layer in self.layers:
            for v in layer.params.values():
                return v.dtype
        return np.dtype(np.float32)

    def _logits(self, x, train: bool, rng, stochastic: bool):
        x = np.asarray(x)
        if x.ndim != 2 or x.shape[1] != self.window_len:
            raise ValueError(f"expected input of shape (batch, {self.window_len}), got {x.shape}")
        h = x.astype(self.dtype, copy=False)[:, :, None]
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            if i == last:
                h = layer.logits(h)
            else:
                h = layer.forward(h, train=train, rng=rng, stochastic=stochastic)
            if not np.all(np.isfinite(h)):
                raise NumericFailure(i)
        return h

    def forward(self, x, mode: str = "infer", rng=None, stochastic: bool = True):
        """Class probabilities, shape (batch, 4).

        ``mode="train"`` uses batch statistics in batch norm (updating the
        running averages) and, if ``stochastic``, applies input noise and
        dropout drawn from ``rng``.
        """
        if mode not in ("train", "infer"):
            raise ValueError("mode must be 'train' or 'infer'")
        train = mode == "train"
        if train and stochastic and rng is None:
            rng = np.random.default_rng(self.rng_seed)
        return softmax(self._logits(x, train, rng, stochastic))

    def predict_proba(self, x, batch_size: int = 1024) -> np.ndarray:
        x = np.asarray(x)
        out = [self.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.empty((0, N_CLASSES), dtype=self.dtype)

    def loss_and_gradients(self, x, labels, rng=None, stochastic: bool = True):
        """Mean categorical cross-entropy and its gradient for every trainable tensor.

        The forward pass runs in training mode. ``labels`` are class codes
        or one-hot rows.
        """
        y = _as_codes(labels)
        logits = self._logits(x, True, rng, stochastic)
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        n = len(y)
        loss = float(-np.mean(logp[np.arange(n), y], dtype=np.float64))
        g = np.exp(logp)
        g[np.arange(n), y] -= 1.0
        g /= n
        for layer in reversed(self.layers):
            g = layer.backward(g)
            if g is None:
                break
        grads = OrderedDict()
        for i, layer in enumerate(self.layers):
            for k in layer.params:
                grads[f"{i}.{layer.kind}.{k}"] = layer.grads[k]
        return loss, grads


def _as_codes(labels) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim == 2:
        if y.shape[1] != N_CLASSES:
            raise ValueError("one-hot labels must have 4 columns")
        return y.argmax(axis=1)
    return y.astype(np.intp)


def cross_entropy(probs, labels) -> float:
    """Mean −log p(true class), with probabilities clipped to [1e-7, 1 − 1e-7]."""
    p = np.clip(np.asarray(probs, dtype=np.float64), PROB_CLIP, 1 - PROB_CLIP)
    y = _as_codes(labels)
    return float(-np.mean(np.log(p[np.arange(len(y)), y])))


def build_paper_architecture(window_len: int = 500, arch: ArchSpec = PAPER_ARCH, seed: int = 0) -> Network:
    return Network(architecture_layers(arch, window_len), window_len, rng_seed=seed).init_params()


def build_fast_architecture(window_len: int = 500, seed: int = 0) -> Network:
    return build_paper_architecture(window_len, FAST_ARCH, seed)
