import math

import numpy as np
import pytest

from reca import activations as act
from reca.data import philox
from reca.experiments.gradcheck import check_model, layer_cases
from reca.nn import functional as F
from reca.nn import model as M
from reca.nn.layers import ActivationLayer, ResidualLayer


def naive_conv(x, k, b, stride, pad):
    n, c, h, w = x.shape
    o, _, kk, _ = k.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kk) // stride + 1
    wo = (w + 2 * pad - kk) // stride + 1
    y = np.zeros((n, o, ho, wo))
    for a in range(n):
        for f in range(o):
            for i in range(ho):
                for j in range(wo):
                    acc = b[f]
                    for ch in range(c):
                        for u in range(kk):
                            for v in range(kk):
                                acc += xp[a, ch, i * stride + u, j * stride + v] * k[f, ch, u, v]
                    y[a, f, i, j] = acc
    return y


# -- dense -----------------------------------------------------------------------------

def test_dense_examples():
    x = np.array([[1.0, 2.0]])
    assert F.dense_forward(x, np.eye(2), np.zeros(2))[0].tolist() == [[1, 2]]
    assert F.dense_forward(x, np.zeros((2, 2)), np.array([3.0, 4.0]))[0].tolist() == [[3, 4]]
    assert F.dense_forward(x, np.array([[1.0, 2], [3, 4]]), np.ones(2))[0].tolist() == [[8, 11]]


def test_dense_backward_examples():
    _, ctx = F.dense_forward(np.array([[1.0, 2.0]]), np.eye(2), np.zeros(2))
    dx, dw, db = F.dense_backward(ctx, np.zeros((1, 2)))
    assert not dx.any() and not dw.any() and not db.any()
    dx, _, _ = F.dense_backward(ctx, np.array([[1.0, 0.0]]))
    assert dx.tolist() == [[1, 0]]


def test_dense_shape_error():
    with pytest.raises(F.ShapeError):
        F.dense_forward(np.ones((2, 3)), np.ones((4, 2)))


# -- convolution -----------------------------------------------------------------------

def test_conv_unit_kernel_identity():
    x = np.arange(9.0).reshape(1, 1, 3, 3)
    y, ctx = F.conv2d_forward(x, np.ones((1, 1, 1, 1)), None, 1, 0)
    assert np.array_equal(y, x)
    up = np.random.default_rng(0).standard_normal(y.shape)
    assert np.array_equal(F.conv2d_backward(ctx, up)[0], up)


def test_conv_sum_of_ones():
    y, _ = F.conv2d_forward(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), None, 1, 0)
    assert y.shape == (1, 1, 1, 1) and y.item() == 9


def test_conv_matches_naive_loops():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 2, 5, 5))
    k = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    y, _ = F.conv2d_forward(x, k, b, 2, 1)
    assert y.shape == (1, 3, 3, 3)
    np.testing.assert_allclose(y, naive_conv(x, k, b, 2, 1), rtol=1e-12, atol=1e-12)


def test_conv_zero_upstream():
    rng = np.random.default_rng(4)
    y, ctx = F.conv2d_forward(rng.standard_normal((2, 2, 4, 4)), rng.standard_normal((3, 2, 3, 3)),
                              np.zeros(3), 1, 1)
    for g in F.conv2d_backward(ctx, np.zeros_like(y)):
        assert not g.any()


def test_conv_output_size_errors():
    assert F.conv_output_size(32, 3, 1, 1) == 32
    with pytest.raises(F.ShapeError):
        F.conv_output_size(2, 5, 1, 0)


# -- batch norm ------------------------------------------------------------------------

def test_batchnorm_constant_input():
    x = np.full((4, 3), 7.0)
    shift = np.array([0.1, -0.2, 0.3])
    y, _ = F.batchnorm_forward(x, np.ones(3), shift, np.zeros(3), np.ones(3), 1e-5, 0.1, True)
    np.testing.assert_allclose(y, np.broadcast_to(shift, x.shape), atol=1e-12)


def test_batchnorm_standardized_input():
    x = np.array([[-1.0], [1.0], [-1.0], [1.0]])
    y, _ = F.batchnorm_forward(x, np.ones(1), np.zeros(1), np.zeros(1), np.ones(1), 1e-5, 0.1, True)
    np.testing.assert_allclose(y, x / math.sqrt(1 + 1e-5), rtol=1e-12)


def test_batchnorm_running_stats_and_single_sample():
    rm, rv = np.zeros(2), np.ones(2)
    x = np.array([[1.0, 2.0], [3.0, 6.0]])
    F.batchnorm_forward(x, np.ones(2), np.zeros(2), rm, rv, 1e-5, 0.1, True)
    np.testing.assert_allclose(rm, [0.2, 0.4])
    np.testing.assert_allclose(rv, [0.9 + 0.1 * 2.0, 0.9 + 0.1 * 8.0])  # unbiased batch variance
    with pytest.raises(ValueError):
        F.batchnorm_forward(x[:1], np.ones(2), np.zeros(2), rm, rv, 1e-5, 0.1, True)
    y, _ = F.batchnorm_forward(x[:1], np.ones(2), np.zeros(2), rm, rv, 1e-5, 0.1, False)
    assert y.shape == (1, 2)


# -- pooling and loss --------------------------------------------------------------------

def test_maxpool_first_max_wins():
    x = np.ones((1, 1, 2, 2))
    y, ctx = F.maxpool_forward(x, 2, 2)
    dx = F.maxpool_backward(ctx, np.ones_like(y))
    assert dx.ravel().tolist() == [1, 0, 0, 0]


def test_softmax_cross_entropy_examples():
    loss, grad = F.softmax_cross_entropy(np.zeros((3, 10)), np.array([0, 4, 9]))
    assert loss == pytest.approx(math.log(10), rel=1e-15)
    np.testing.assert_allclose(grad.sum(axis=1), 0, atol=1e-15)
    logits = np.zeros((1, 5))
    logits[0, 2] = 1000.0
    loss, grad = F.softmax_cross_entropy(logits, np.array([2]))
    assert loss == pytest.approx(0.0, abs=1e-12) and np.all(np.isfinite(grad))


# -- activation layers ---------------------------------------------------------------------

def test_reca_layer_relu_reduction():
    x = np.random.default_rng(5).standard_normal((2, 3, 4, 4))
    layer = ActivationLayer(act.ReCA(act.RecaParams(0.5, 0, 0)), "channel", (3, 4, 4), np.float64)
    relu = ActivationLayer(act.ReLU(), "channel", (3, 4, 4), np.float64)
    assert np.array_equal(layer.forward(x), relu.forward(x))


def test_reca_layer_negative_input():
    layer = ActivationLayer(act.ReCA(), "channel", (2, 2, 2), np.float64)
    x = -np.ones((1, 2, 2, 2))
    assert not layer.forward(x).any()
    dx = layer.backward(np.ones_like(x))
    assert not dx.any()
    assert all(not p.grad.any() for p in layer.params.values())


def test_reca_layer_param_grads_against_differences():
    # params (0.5, 1, 1), objective = sum of the output
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 3, 4, 4))
    layer = ActivationLayer(act.ReCA(act.RecaParams(0.5, 1, 1)), "channel", (3, 4, 4), np.float64)
    layer.forward(x, True)
    layer.backward(np.ones_like(x))
    h = 1e-6
    for name, p in layer.params.items():
        for c in range(3):
            orig = p.value[c]
            p.value[c] = orig + h
            plus = layer.forward(x).sum()
            p.value[c] = orig - h
            minus = layer.forward(x).sum()
            p.value[c] = orig
            numeric = (plus - minus) / (2 * h)
            assert abs(p.grad[c] - numeric) <= 1e-5 * max(abs(numeric), 1e-12), (name, c)


def test_granularity_site_counts():
    shape = (3, 4, 4)
    assert ActivationLayer(act.ReCA(), "global", shape, np.float32).sites == 1
    assert ActivationLayer(act.ReCA(), "channel", shape, np.float32).sites == 3
    assert ActivationLayer(act.ReCA(), "neuron", shape, np.float32).sites == 48
    assert ActivationLayer(act.ReLU(), "channel", shape, np.float32).sites == 0
    with pytest.raises(ValueError):
        ActivationLayer(act.ReCA(), "layer", shape, np.float32)


# -- composed gradchecks ------------------------------------------------------------------

@pytest.mark.parametrize("name", list(layer_cases(philox(0)).keys()))
def test_layer_gradcheck_float64(name):
    spec, x = layer_cases(philox(0, 13))[name]
    loss = "cross_entropy" if name.endswith("cross_entropy") else "projection"
    r = check_model(spec, x, "float64", seed=0, loss=loss)
    assert r.max_rel_err < 1e-6, (name, r)


def test_mlp_gradcheck_float32_every_scalar():
    spec = M.mlp(3, (5,), 2, kind=act.ReCA())
    x = np.random.default_rng(0).standard_normal((4, 3))
    r = check_model(spec, x, "float32", seed=0, max_coords=10_000)
    assert r.max_rel_err < 1e-4, r


# -- models --------------------------------------------------------------------------------

def test_empty_and_identity_models():
    x = np.random.default_rng(1).standard_normal((3, 4))
    assert np.array_equal(M.model_forward(M.Model(M.ModelSpec((), None, (4,)), dtype=np.float64), x), x)
    m = M.Model(M.ModelSpec((M.Dense(4, 4, bias=False),), None, (4,)), dtype=np.float64)
    m.layers[0].params["weight"].value[...] = np.eye(4)
    assert np.array_equal(M.model_forward(m, x), x)


def test_model_forward_deterministic():
    spec = M.mini_resnet(10, act.ReCA(), widths=(4, 8, 8), input_shape=(3, 16, 16))
    x = np.random.default_rng(2).standard_normal((4, 3, 16, 16))
    a = M.Model(spec, seed=11).forward(x, training=True)
    b = M.Model(spec, seed=11).forward(x, training=True)
    assert np.array_equal(a, b)
    c = M.Model(spec, seed=12).forward(x, training=True)
    assert not np.array_equal(a, c)


def test_residual_zero_block_is_identity():
    spec = M.ModelSpec((M.Residual((M.Conv2D(2, 2, 3, 1, 1), M.Activation(act.ReCA()))),), None, (2, 4, 4))
    m = M.Model(spec, dtype=np.float64)
    for p in m.params():
        if not p.activation:
            p.value[...] = 0
    x = np.random.default_rng(3).standard_normal((2, 2, 4, 4))
    assert np.array_equal(m.forward(x), x)
    assert isinstance(m.layers[0], ResidualLayer) and m.layers[0].projection is None


def test_residual_projection_added_when_channels_change():
    spec = M.ModelSpec((M.Residual((M.Conv2D(2, 3, 3, 1, 1),)),), None, (2, 4, 4))
    assert M.Model(spec).layers[0].projection is not None
    assert M.infer_shapes(spec) == [(3, 4, 4)]


def test_static_shape_errors():
    with pytest.raises(F.ShapeError):
        M.Model(M.ModelSpec((M.Dense(5, 2),), None, (4,)))
    with pytest.raises(F.ShapeError):
        M.Model(M.ModelSpec((M.Dense(4, 3),), 2, (4,)))


def test_count_parameters_examples():
    relu = M.ModelSpec((M.Dense(10, 5), M.Activation(act.ReLU())), None, (10,))
    assert M.count_parameters(relu) == (55, 0)
    reca = M.with_activation(relu, act.ReCA())
    assert M.count_parameters(reca) == (70, 15)


def test_parameter_overhead_for_1356_channels():
    # dense widths summing to 1356 activation channels
    spec = M.mlp(8, (600, 500, 256), 10, kind=act.ReLU())
    assert M.activation_channels(spec) == 1356
    relu_total, _ = M.count_parameters(spec)
    reca_total, reca_act = M.count_parameters(M.with_activation(spec, act.ReCA()))
    assert reca_total - relu_total == reca_act == 4068 == 544_950 - 540_882


@pytest.mark.parametrize("name", list(M.PRESETS))
def test_preset_overhead_is_three_per_channel(name):
    relu = M.preset(name, act.ReLU(), "channel", 10, (3, 32, 32))
    reca = M.with_activation(relu, act.ReCA())
    assert M.count_parameters(reca)[0] - M.count_parameters(relu)[0] == 3 * M.activation_channels(relu)


def test_check_finite_flags_nan():
    m = M.Model(M.mlp(2, (3,), 2), check_finite=True)
    with pytest.raises(FloatingPointError):
        m.forward(np.array([[np.nan, 0.0]]))
