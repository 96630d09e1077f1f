import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reca import activations as act
from reca.activations import (DomainError, NonFiniteInputError, RecaParams, baseline_forward,
                              baseline_input_grad, prelu_param_grad, reca_forward, reca_input_grad,
                              reca_param_grads)

# Reference values from 50-digit mpmath evaluation of the tanh form
# alpha*x*(((1 + tanh x)/2)**beta + sigmoid(x)**delta) and its exact derivatives.
F_1 = 0.80592782830394366
DF_1 = 1.0092273803281911
DALPHA_1 = 1.6118556566078873
DBETA_1 = -0.055898910620097285
DDELTA_1 = -0.11450632200815436
F_2_QUARTER = 1.9642389707921719
DF_2_QUARTER = 1.0199418164366778
SWISH_GRAD_1 = 0.92767051187148673
ELU_MINUS_1 = -0.63212055882855768
SELU_MINUS_1 = -1.1113275400111319
TANH_GRAD_HALF = 0.78644773296592741

P111 = RecaParams(0.5, 1.0, 1.0)

params_st = st.builds(RecaParams,
                      st.floats(1e-4, 3.0), st.floats(0.0, 5.0), st.floats(0.0, 5.0))


def test_default_params():
    assert RecaParams().as_tuple() == (0.5, 0.05, 0.05)


@pytest.mark.parametrize("args", [(0.0, 1, 1), (-1.0, 1, 1), (0.5, -0.1, 0), (0.5, 0, -1),
                                  (float("nan"), 1, 1), (0.5, float("inf"), 0)])
def test_param_domain(args):
    with pytest.raises(DomainError):
        RecaParams(*args)


def test_forward_examples():
    assert reca_forward(-3.0, P111) == 0.0
    assert reca_forward(2.0, RecaParams(0.5, 0, 0)) == 2.0
    assert reca_forward(1.0, P111) == pytest.approx(F_1, rel=1e-14)
    assert reca_forward(2.0, RecaParams(0.5, 0.25, 0.25)) == pytest.approx(F_2_QUARTER, rel=1e-14)


def test_input_grad_examples():
    assert reca_input_grad(5.0, RecaParams(0.5, 0, 0)) == 1.0
    assert reca_input_grad(0.0, P111) == 0.0
    assert reca_input_grad(1.0, P111) == pytest.approx(DF_1, rel=1e-12)
    assert reca_input_grad(2.0, RecaParams(0.5, 0.25, 0.25)) == pytest.approx(DF_2_QUARTER, rel=1e-12)


def test_param_grad_examples():
    assert reca_param_grads(-1.0, P111) == (0.0, 0.0, 0.0)
    assert reca_param_grads(0.0, P111) == (0.0, 0.0, 0.0)
    da, db, dd = reca_param_grads(1.0, P111)
    assert da == pytest.approx(DALPHA_1, rel=1e-12)
    assert db == pytest.approx(DBETA_1, rel=1e-12)
    assert dd == pytest.approx(DDELTA_1, rel=1e-12)
    # cross-check of the beta gradient in closed form: 0.5 * sigmoid(2) * ln sigmoid(2)
    s2 = 1 / (1 + math.exp(-2))
    assert db == pytest.approx(0.5 * s2 * math.log(s2), rel=1e-14)


def test_non_finite_input():
    for bad in (float("nan"), float("inf"), -float("inf")):
        with pytest.raises(NonFiniteInputError):
            reca_forward(bad)
        with pytest.raises(NonFiniteInputError):
            baseline_forward(act.ReLU(), bad)
    with pytest.raises(NonFiniteInputError):
        reca_forward(np.array([1.0, np.nan]))


def test_array_input_returns_array():
    x = np.array([-1.0, 0.0, 1.0])
    y = reca_forward(x, P111)
    assert isinstance(y, np.ndarray) and y.shape == (3,)
    assert y[2] == pytest.approx(F_1, rel=1e-14)


def test_baseline_examples():
    assert baseline_forward(act.LeakyReLU(), -2.0) == pytest.approx(-0.02, rel=1e-15)
    assert baseline_forward(act.Swish(), 0.0) == 0.0
    assert baseline_forward(act.ELU(1.0), -1.0) == pytest.approx(ELU_MINUS_1, rel=1e-14)
    assert baseline_forward(act.SELU(), -1.0) == pytest.approx(SELU_MINUS_1, rel=1e-14)
    assert baseline_input_grad(act.ReLU(), 3.0) == 1.0
    assert baseline_input_grad(act.ReLU(), 0.0) == 0.0
    assert baseline_input_grad(act.Swish(), 1.0) == pytest.approx(SWISH_GRAD_1, rel=1e-13)
    assert baseline_input_grad(act.Tanh(), 0.5) == pytest.approx(TANH_GRAD_HALF, rel=1e-13)


def test_kink_convention_left_branch():
    assert baseline_input_grad(act.LeakyReLU(), 0.0) == 0.01
    assert baseline_input_grad(act.PReLU(), 0.0) == 0.25
    assert baseline_input_grad(act.ELU(), 0.0) == 1.0


def test_constants():
    assert act.SELU_ALPHA == 1.67326 and act.SELU_LAMBDA == 1.0507
    assert act.LeakyReLU().slope == 0.01


def test_prelu_param_grad():
    assert prelu_param_grad(-2.0) == -2.0
    assert prelu_param_grad(3.0) == 0.0
    assert prelu_param_grad(0.0) == 0.0


def test_relu_reduction_bitwise():
    x = np.linspace(-20, 20, 100_001)
    y = reca_forward(x, RecaParams(0.5, 0, 0))
    assert np.array_equal(y.view(np.int64), np.maximum(x, 0).view(np.int64))
    g = reca_input_grad(x, RecaParams(0.5, 0, 0))
    assert np.array_equal(g, (x > 0).astype(float))


def test_literal_first_term_is_wrong():
    literal = float(act.reca_input_grad_literal(1.0, 0.5, 1.0, 1.0))
    assert abs(literal - DF_1) / DF_1 > 0.1


def test_sigmoid_identity():
    x = np.linspace(-40, 40, 200_001)
    assert np.max(np.abs(act.sigmoid(2 * x) - (1 + np.tanh(x)) / 2)) <= 1e-12


def test_log_sigmoid_extremes():
    assert act.log_sigmoid(np.float64(-800.0)) == pytest.approx(-800.0)
    assert act.log_sigmoid(np.float64(40.0)) == pytest.approx(-math.exp(-40), rel=1e-12)


def test_decay_ordering():
    # d/dx sigmoid(2x) decays faster than d/dx sigmoid(x) on [5, 20]
    x = np.linspace(5, 20, 1001)
    s1, s2 = act.sigmoid(x), act.sigmoid(2 * x)
    tanh_term = np.abs(2 * s2 * (1 - s2))
    sig_term = np.abs(s1 * (1 - s1))
    assert np.all(tanh_term < sig_term)


@settings(max_examples=300, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), params_st)
def test_monotone(x1, x2, p):
    lo, hi = sorted((x1, x2))
    assert reca_forward(lo, p) <= reca_forward(hi, p) + 1e-12


@settings(max_examples=300, deadline=None)
@given(st.floats(-50, 50), params_st)
def test_nonnegative_and_sparse(x, p):
    y = reca_forward(x, p)
    assert y >= 0
    if x <= 0:
        assert y == 0.0


@settings(max_examples=200, deadline=None)
@given(params_st)
def test_asymptotic_slope(p):
    assert abs(reca_forward(40.0, p) / 40.0 - 2 * p.alpha) < 1e-6


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 5.0), params_st)
def test_gradients_finite(x, p):
    assert all(math.isfinite(v) for v in (reca_input_grad(x, p),) + reca_param_grads(x, p))


def test_kind_lookup():
    assert isinstance(act.kind_from_name("ReCA"), act.ReCA)
    with pytest.raises(ValueError):
        act.kind_from_name("gelu")
    assert act.initial_params(act.ReCA()) == {"alpha": 0.5, "beta": 0.05, "delta": 0.05}
    assert act.initial_params(act.PReLU()) == {"slope": 0.25}
    assert act.initial_params(act.ReLU()) == {}
