import numpy as np
import pytest

from emleak.nn.model import (
    PAPER_ARCH,
    ArchSpec,
    Network,
    NumericFailure,
    architecture_layers,
    build_fast_architecture,
    build_paper_architecture,
    cross_entropy,
)

from gradcheck import check_network

PAPER_SHAPES = [(500,), (500, 13), (250, 13), (250, 13), (250, 13), (250, 118), (250, 118), (250, 118),
                (250, 118), (250, 100), (62, 100), (62, 100), (62, 100), (6200,), (224,), (4,)]
PAPER_COUNTS = [0, 52, 0, 0, 52, 23128, 0, 0, 472, 59100, 0, 400, 0, 0, 1389024, 900]


def test_paper_architecture_shapes_and_counts():
    net = build_paper_architecture(500)
    assert net.shapes == PAPER_SHAPES
    assert net.param_counts() == PAPER_COUNTS
    assert net.total_params() == 1473128


def test_fast_architecture_is_smaller():
    net = build_fast_architecture(500)
    assert net.shapes[-3] == (62 * 16,)
    assert net.total_params() < 100000


def test_window_too_short_rejected():
    with pytest.raises(ValueError):
        architecture_layers(PAPER_ARCH, 7)


def test_fresh_network_is_roughly_uniform(rng):
    net = build_paper_architecture(500, seed=3)
    p = net.predict_proba(rng.standard_normal((256, 500)))
    assert np.all((p.mean(axis=0) >= 0.15) & (p.mean(axis=0) <= 0.35))


def test_probabilities_normalized_and_deterministic(rng):
    net = build_fast_architecture(500, seed=1)
    x = rng.standard_normal((1000, 500))
    p = net.predict_proba(x)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-6) and np.all(p > 0)
    assert net.predict_proba(x).tobytes() == p.tobytes()


def test_input_shape_checked():
    net = build_fast_architecture(500)
    with pytest.raises(ValueError):
        net.forward(np.zeros((2, 400)))


def test_non_finite_input_reports_layer():
    net = build_fast_architecture(500)
    x = np.zeros((2, 500))
    x[0, 10] = np.nan
    with pytest.raises(NumericFailure) as exc:
        net.forward(x)
    assert exc.value.layer_index == 0


def test_cross_entropy_closed_forms():
    y = np.array([0, 1, 2, 3])
    assert cross_entropy(np.full((4, 4), 0.25), y) == pytest.approx(np.log(4))
    assert cross_entropy(np.eye(4), y) <= 1e-6
    assert cross_entropy(np.eye(4), np.eye(4)) <= 1e-6


def test_uniform_logits_give_ln4(rng):
    net = build_fast_architecture(40 * 5 // 5 * 5, seed=0)
    for layer in net.layers:
        if layer.kind == "dense" and layer.activation == "softmax":
            layer.params["kernel"][:] = 0
    loss, _ = net.loss_and_gradients(rng.standard_normal((6, net.window_len)), np.arange(6) % 4, stochastic=False)
    assert loss == pytest.approx(np.log(4), abs=1e-6)


def test_tiny_network_gradients(rng):
    from emleak.nn.layers import Conv1D, Dense, Flatten

    layers = [Conv1D(1, 2, 3), Flatten(), Dense(2 * 40, 4, "softmax")]
    net = Network(layers, 40).init_params(2)
    errs = check_network(net, rng.standard_normal((8, 40)), rng.integers(0, 4, 8))
    assert max(errs.values()) <= 1e-4, errs


def test_reduced_full_stack_gradients(rng):
    arch = ArchSpec(conv_channels=(2, 3, 3), dense_units=5)
    net = Network(architecture_layers(arch, 40), 40).init_params(1)
    kinds = {l.kind for l in net.layers}
    assert {"conv1d", "max_pool1d", "spatial_dropout1d", "batch_norm", "flatten", "dense"} <= kinds
    errs = check_network(net, rng.standard_normal((8, 40)), rng.integers(0, 4, 8))
    assert max(errs.values()) <= 1e-4, errs


def test_batchnorm_infer_batch_equals_single(rng):
    net = build_fast_architecture(500, seed=4)
    x = rng.standard_normal((64, 500)).astype(np.float32)
    net.loss_and_gradients(x, rng.integers(0, 4, 64), rng=rng)  # moves running stats
    batch = net.predict_proba(x[:8])
    single = np.concatenate([net.predict_proba(x[i : i + 1]) for i in range(8)])
    assert np.allclose(batch, single, rtol=0, atol=1e-7)


def test_config_and_tensor_round_trip(rng):
    net = build_fast_architecture(500, seed=5)
    clone = Network.from_config(net.config(), 500)
    for name, t in net.named_tensors().items():
        clone.set_tensor(name, t)
    x = rng.standard_normal((4, 500))
    assert np.array_equal(clone.predict_proba(x), net.predict_proba(x))
    with pytest.raises(ValueError):
        clone.set_tensor("1.conv1d.kernel", np.zeros((2, 2, 2)))
