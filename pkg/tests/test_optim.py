import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reca import activations as act
from reca.nn import model as M
from reca.nn.layers import ActivationLayer
from reca.optim import (Optimizer, ScheduleSpec, activation_l2, adam_state, adam_step,
                        apply_activation_l2, cosine_lr, project_activation_params, sgd_state, sgd_step)

TABLE_SGD = ScheduleSpec(0.05, 100, 1e-4)


def test_cosine_endpoints_exact():
    for total in (1, 15, 100, 200):
        s = ScheduleSpec(0.05, total, 1e-4)
        assert cosine_lr(0, s) == 0.05
        assert cosine_lr(total, s) == 1e-4


def test_cosine_midpoint():
    assert cosine_lr(50, TABLE_SGD) == pytest.approx(0.02505, rel=1e-14)


def test_cosine_monotone_and_bounded():
    lrs = [cosine_lr(e, TABLE_SGD) for e in range(101)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
    assert all(1e-4 <= v <= 0.05 for v in lrs)


def test_cosine_rejects_bad_input():
    with pytest.raises(ValueError):
        cosine_lr(101, TABLE_SGD)
    with pytest.raises(ValueError):
        ScheduleSpec(1e-5, 10, 1e-4)
    with pytest.raises(ValueError):
        ScheduleSpec(0.05, 0)


def test_sgd_examples():
    p = [np.array([1.0])]
    sgd_step(p, [np.array([1.0])], sgd_state(p, momentum=0.0), 0.1)
    assert p[0][0] == pytest.approx(0.9, rel=1e-15)

    p = [np.array([1.0])]
    state = sgd_state(p, momentum=0.9)
    for _ in range(5):
        sgd_step(p, [np.zeros(1)], state, 0.1)
    assert p[0][0] == 1.0

    p = [np.array([1.0])]
    state = sgd_state(p, momentum=0.9)
    sgd_step(p, [np.array([1.0])], state, 0.1)
    sgd_step(p, [np.array([1.0])], state, 0.1)
    assert p[0][0] == pytest.approx(0.71, rel=1e-14)


def test_sgd_shape_mismatch():
    p = [np.zeros(2)]
    with pytest.raises(ValueError):
        sgd_step(p, [np.zeros(3)], sgd_state(p), 0.1)


def test_sgd_descends_quadratic():
    # f(p) = 2 p^2, curvature 4, so any lr < 0.5 decreases f monotonically without momentum
    p = [np.array([3.0])]
    state = sgd_state(p, momentum=0.0)
    losses = []
    for _ in range(20):
        losses.append(2 * p[0][0] ** 2)
        sgd_step(p, [4 * p[0].copy()], state, 0.2)
    assert all(a > b for a, b in zip(losses, losses[1:]))


def test_adam_examples():
    p = [np.array([1.0])]
    adam_step(p, [np.zeros(1)], adam_state(p), 0.001)
    assert p[0][0] == 1.0

    p = [np.array([1.0])]
    adam_step(p, [np.ones(1)], adam_state(p), 0.001)
    assert 1.0 - p[0][0] == pytest.approx(0.001, rel=1e-6)


def test_adam_matches_hand_iteration():
    g, lr, b1, b2, eps = 0.3, 0.01, 0.9, 0.999, 1e-8
    p = [np.array([2.0])]
    state = adam_state(p)
    for _ in range(3):
        adam_step(p, [np.array([g])], state, lr)
    ref, m, v = 2.0, 0.0, 0.0
    for t in range(1, 4):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        ref -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    assert abs(p[0][0] - ref) <= 1e-12


def test_activation_l2_examples():
    penalty, grads = activation_l2([np.array([0.5, 0.05, 0.05])], 1e-7)
    assert penalty == pytest.approx(2.55e-8, rel=1e-12)
    penalty, grads = activation_l2([np.array([0.5, 0.05, 0.05])], 0.0)
    assert penalty == 0 and not grads[0].any()
    _, grads = activation_l2([np.array([1.0])], 1e-7)
    assert grads[0][0] == 2e-7
    with pytest.raises(ValueError):
        activation_l2([np.ones(1)], -1.0)


def test_l2_never_touches_weights():
    spec = M.mlp(3, (4,), 2, kind=act.ReCA())
    x = np.random.default_rng(0).standard_normal((5, 3))
    grads = {}
    for strength in (0.0, 1e-7):
        m = M.Model(spec, seed=0)
        out = m.forward(x, True)
        m.backward(np.ones_like(out))
        apply_activation_l2(m.params(), strength)
        grads[strength] = {n: p.grad.copy() for n, p in m.named_params()}
    for name, p in M.Model(spec).named_params():
        same = np.array_equal(grads[0.0][name], grads[1e-7][name])
        assert same != p.activation, name


def test_projection_examples():
    layer = ActivationLayer(act.ReCA(), "channel", (1,), np.float64)
    for name, v in zip(("alpha", "beta", "delta"), (-0.1, -0.2, 0.3)):
        layer.params[name].value[...] = v
    project_activation_params(layer)
    assert [float(layer.params[n].value[0]) for n in ("alpha", "beta", "delta")] == [1e-4, 0.0, 0.3]
    fresh = ActivationLayer(act.ReCA(), "channel", (1,), np.float64)
    project_activation_params(fresh)
    assert [float(fresh.params[n].value[0]) for n in ("alpha", "beta", "delta")] == [0.5, 0.05, 0.05]


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(1e-4, 1.0))
def test_projection_after_any_step_keeps_domain(ga, gb, gd, lr):
    layer = ActivationLayer(act.ReCA(), "channel", (2,), np.float64)
    for name, g in zip(("alpha", "beta", "delta"), (ga, gb, gd)):
        layer.params[name].grad[...] = g
    opt = Optimizer(layer.params.values(), "sgd")
    opt.step(lr)
    layer.project()
    a, b, d = (layer.params[n].value for n in ("alpha", "beta", "delta"))
    assert np.all(a >= act.ALPHA_MIN) and np.all(b >= 0) and np.all(d >= 0)
    x = np.sort(np.random.default_rng(0).uniform(-10, 10, 200))
    y = act.reca(x, a[0], b[0], d[0])
    assert np.all(np.diff(y) >= -1e-12)


def test_activation_lr_scale_zero_freezes():
    spec = M.mlp(3, (4,), 2, kind=act.ReCA())
    m = M.Model(spec, seed=0)
    out = m.forward(np.random.default_rng(1).standard_normal((5, 3)), True)
    m.backward(np.ones_like(out))
    before = {n: p.value.copy() for n, p in m.named_params()}
    Optimizer(m.params(), "sgd", activation_lr_scale=0.0).step(0.1)
    for name, p in m.named_params():
        assert np.array_equal(before[name], p.value) == p.activation, name


def test_optimizer_kind_checked():
    with pytest.raises(ValueError):
        Optimizer([], "rmsprop")


def test_projection_floor_holds_in_float32():
    layer = ActivationLayer(act.ReCA(), "channel", (3,), np.float32)
    layer.params["alpha"].value[...] = -1.0
    layer.project()
    a = layer.params["alpha"].value
    assert a.dtype == np.float32 and np.all(a.astype(np.float64) >= act.ALPHA_MIN)
