import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erf

from emleak.nn.layers import (
    Activation,
    BatchNorm,
    Conv1D,
    Dense,
    Flatten,
    MaxPool1D,
    SpatialDropout1D,
    GaussianNoise,
    gelu,
    layer_from_config,
    softmax,
)
from emleak.nn._kernels import gelu_backward32, gelu_forward32

from gradcheck import check_layer

TOL = 1e-4


def _init(layer, rng):
    for k, v in layer.params.items():
        layer.params[k] = rng.uniform(-0.8, 0.8, v.shape)
    return layer


@pytest.mark.parametrize("dilation", [1, 2, 4])
def test_conv_gradients(dilation, rng):
    layer = _init(Conv1D(2, 3, 5, dilation), rng)
    errs = check_layer(layer, rng.standard_normal((3, 20, 2)), rng)
    assert max(errs.values()) <= TOL, errs


def test_dense_gradients(rng):
    errs = check_layer(_init(Dense(6, 4), rng), rng.standard_normal((5, 6)), rng)
    assert max(errs.values()) <= TOL, errs


def test_batchnorm_gradients_train_mode(rng):
    layer = BatchNorm(3)
    layer.params["gamma"] = rng.uniform(0.5, 1.5, 3)
    layer.params["beta"] = rng.uniform(-0.5, 0.5, 3)
    errs = check_layer(layer, rng.standard_normal((4, 6, 3)), rng)
    assert max(errs.values()) <= TOL, errs


def test_gelu_gradients(rng):
    errs = check_layer(Activation("gelu"), rng.standard_normal((4, 7, 2)) * 2, rng)
    assert errs["input"] <= TOL


@pytest.mark.parametrize("size", [1, 2, 4])
def test_maxpool_gradients(size, rng):
    # distinct values keep the argmax away from ties
    x = rng.permutation(4 * 10 * 2).reshape(4, 10, 2) * 0.1
    errs = check_layer(MaxPool1D(size), x, rng, h=1e-5)
    assert errs["input"] <= TOL


def test_flatten_gradients(rng):
    errs = check_layer(Flatten(), rng.standard_normal((3, 4, 2)), rng)
    assert errs["input"] <= TOL


def test_maxpool_floor_and_identity():
    x = np.arange(2 * 250 * 3, dtype=np.float64).reshape(2, 250, 3)
    assert MaxPool1D(4).output_shape((250, 3)) == (62, 3)
    assert MaxPool1D(4).forward(x).shape == (2, 62, 3)
    assert MaxPool1D(1).forward(x) is x or np.array_equal(MaxPool1D(1).forward(x), x)


def test_conv_same_padding_matches_direct_sum(rng):
    layer = _init(Conv1D(2, 3, 3, 2, activation="linear"), rng)
    x = rng.standard_normal((1, 9, 2))
    out = layer.forward(x)
    w, b = layer.params["kernel"], layer.params["bias"]
    pad = np.pad(x[0], ((2, 2), (0, 0)))
    ref = np.array([sum(pad[t + 2 * j] @ w[j] for j in range(3)) + b for t in range(9)])
    assert np.allclose(out[0], ref)


def test_spatial_dropout_zeroes_whole_channels(rng):
    layer = SpatialDropout1D(0.25)
    x = np.ones((200, 10, 8))
    y = layer.forward(x, train=True, rng=rng)
    per_channel = y[:, 0, :]
    assert np.all((y == 0) | np.isclose(y, 1 / 0.75))
    assert np.all(y == per_channel[:, None, :])
    assert np.mean(per_channel == 0) == pytest.approx(0.25, abs=0.03)
    assert layer.forward(x, train=False) is x


def test_noise_layer_train_only(rng):
    layer = GaussianNoise(0.1)
    x = np.zeros((100, 50, 1))
    assert layer.forward(x) is x
    y = layer.forward(x, train=True, rng=rng)
    assert y.std() == pytest.approx(0.1, rel=0.05)


def test_batchnorm_running_statistics(rng):
    bn = BatchNorm(2)
    x = rng.normal(3.0, 2.0, (64, 10, 2))
    bn.forward(x, train=True)
    assert np.allclose(bn.state["moving_mean"], 0.01 * x.mean(axis=(0, 1)), rtol=1e-5)
    assert bn.param_count() == 8


def test_gelu_exact_definition():
    x = np.linspace(-5, 5, 101)
    assert np.allclose(gelu(x), x * 0.5 * (1 + erf(x / np.sqrt(2))), rtol=0, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.floats(-12, 12, width=32))
def test_float32_gelu_kernel_matches_float64(v):
    z = np.full(3, v, dtype=np.float32)
    out, cdf = gelu_forward32(z)
    ref = gelu(np.float64(v))
    assert abs(out[0] - ref) <= 1e-6 * max(1.0, abs(v))
    g = gelu_backward32(np.ones(3, np.float32), z, cdf)
    c = 0.5 * (1 + erf(v / np.sqrt(2)))
    dref = c + v * np.exp(-0.5 * v * v) / np.sqrt(2 * np.pi)
    assert abs(g[0] - dref) <= 1e-6


@settings(max_examples=50)
@given(st.lists(st.floats(-50, 50), min_size=4, max_size=4))
def test_softmax_rows_positive_and_normalized(z):
    p = softmax(np.array([z, z]))
    assert np.all(p > 0) or np.ptp(z) > 30
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-6)


def test_layer_config_round_trip():
    for layer in (Conv1D(1, 4, 3, 2), MaxPool1D(4), SpatialDropout1D(0.25), BatchNorm(5), Dense(10, 4, "softmax")):
        clone = layer_from_config(layer.config())
        assert clone.config() == layer.config()
