"""Scalar and elementwise mathematics for ReCA and the baseline activations.

ReCA is

    f(x) = alpha * max(0, x) * (((1 + tanh x) / 2) ** beta + sigmoid(x) ** delta)

Everything here is evaluated through the identity (1 + tanh x) / 2 == sigmoid(2x),
and every real power b ** e is computed as exp(e * log b) with the log taken in
log-sigmoid form, so for x > 0 the bases never underflow to zero and the logs
never lose precision.  An exponent of exactly zero yields exactly one, which makes
ReCA(alpha=0.5, beta=0, delta=0) bitwise equal to ReLU.

Two layers of API live in this module:

* ``reca``, ``reca_partials``, ``activation_forward`` ... operate on numpy arrays
  with broadcasting and are what the network layers call.  They do not validate.
* ``reca_forward``, ``reca_input_grad``, ``baseline_forward`` ... take Python
  floats, validate their inputs and return floats.

At non-differentiable points (x == 0 for the ReLU family and ReCA) the derivative
takes the value of the ``x <= 0`` branch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

ALPHA_MIN = 1e-4
SELU_ALPHA = 1.67326
SELU_LAMBDA = 1.0507


class DomainError(ValueError):
    """Activation parameters outside their valid domain."""


class NonFiniteInputError(ValueError):
    """An activation received a NaN or infinite input."""


@dataclass(frozen=True)
class RecaParams:
    alpha: float = 0.5
    beta: float = 0.05
    delta: float = 0.05

    def __post_init__(self):
        for name in ("alpha", "beta", "delta"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite, got {getattr(self, name)!r}")
        if not self.alpha > 0:
            raise DomainError(f"alpha must be > 0, got {self.alpha!r}")
        if self.beta < 0 or self.delta < 0:
            raise DomainError(f"beta and delta must be >= 0, got ({self.beta!r}, {self.delta!r})")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.alpha, self.beta, self.delta)


# -- activation kinds --------------------------------------------------------
# Each kind carries its fixed constants or the initial value of its learnable
# parameters.  ``learnable`` lists the names of parameters trained by backprop.

@dataclass(frozen=True)
class Linear:
    name = "linear"
    learnable = ()


@dataclass(frozen=True)
class ReLU:
    name = "relu"
    learnable = ()


@dataclass(frozen=True)
class LeakyReLU:
    slope: float = 0.01
    name = "leaky_relu"
    learnable = ()


@dataclass(frozen=True)
class PReLU:
    slope: float = 0.25
    name = "prelu"
    learnable = ("slope",)


@dataclass(frozen=True)
class Swish:
    name = "swish"
    learnable = ()


@dataclass(frozen=True)
class ParametricSwish:
    beta: float = 1.0
    name = "pswish"
    learnable = ("beta",)


@dataclass(frozen=True)
class Sigmoid:
    name = "sigmoid"
    learnable = ()


@dataclass(frozen=True)
class Tanh:
    name = "tanh"
    learnable = ()


@dataclass(frozen=True)
class ELU:
    alpha: float = 1.0
    name = "elu"
    learnable = ()


@dataclass(frozen=True)
class SELU:
    name = "selu"
    learnable = ()


@dataclass(frozen=True)
class ReCA:
    params: RecaParams = field(default_factory=RecaParams)
    name = "reca"
    learnable = ("alpha", "beta", "delta")


ActivationKind = Union[Linear, ReLU, LeakyReLU, PReLU, Swish, ParametricSwish,
                       Sigmoid, Tanh, ELU, SELU, ReCA]

KINDS = {k.name: k for k in (Linear, ReLU, LeakyReLU, PReLU, Swish, ParametricSwish,
                             Sigmoid, Tanh, ELU, SELU, ReCA)}


def kind_from_name(name: str) -> ActivationKind:
    """Default-parameterized kind for a short name such as ``"reca"``."""
    try:
        return KINDS[name.lower()]()
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(KINDS)}") from None


def initial_params(kind: ActivationKind) -> dict[str, float]:
    """Initial values of the learnable parameters of ``kind``."""
    if isinstance(kind, ReCA):
        return dict(zip(ReCA.learnable, kind.params.as_tuple()))
    if isinstance(kind, PReLU):
        return {"slope": kind.slope}
    if isinstance(kind, ParametricSwish):
        return {"beta": kind.beta}
    return {}


# -- elementwise primitives ----------------------------------------------------

def sigmoid(z):
    """Logistic function without overflow for either sign of ``z``."""
    z = np.asarray(z)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1 / (1 + e), e / (1 + e))


def log_sigmoid(z):
    """log(sigmoid(z)) = -softplus(-z)."""
    z = np.asarray(z)
    return -(np.maximum(-z, 0) + np.log1p(np.exp(-np.abs(z))))


def _power(log_base, exponent):
    # exponent 0 must give exactly 1 so the ReLU reduction is bitwise
    exponent = np.asarray(exponent)
    if not np.any(exponent == 0):
        return np.exp(exponent * log_base)
    return np.where(exponent == 0, 1, np.exp(exponent * log_base))


def reca_terms(x, beta, delta):
    """Shared intermediates of ReCA's value and derivatives.

    Returns ``(xp, e1, e2, ls1, ls2, t, s)`` with xp = max(x, 0), e1 = exp(-xp),
    e2 = e1**2, ls1 = log sigmoid(xp), ls2 = log sigmoid(2 xp),
    t = sigmoid(2 xp)**beta and s = sigmoid(xp)**delta.
    """
    xp = np.maximum(x, 0)
    e1 = np.exp(-xp)
    e2 = e1 * e1
    ls1 = -np.log1p(e1)
    ls2 = -np.log1p(e2)
    return xp, e1, e2, ls1, ls2, _power(ls2, beta), _power(ls1, delta)


def reca(x, alpha, beta, delta, terms=None):
    """ReCA evaluated elementwise; parameters broadcast against ``x``."""
    xp, _, _, _, _, t, s = terms if terms is not None else reca_terms(x, beta, delta)
    return alpha * (xp * (t + s))


def reca_partials(x, alpha, beta, delta, terms=None):
    """Elementwise (df/dx, df/dalpha, df/dbeta, df/ddelta).

    All four are zero where ``x <= 0``.  With g = sigmoid(2x)**beta + sigmoid(x)**delta
    the input derivative is alpha*g + alpha*x*g'.  ``terms`` may carry the
    result of ``reca_terms`` from the forward pass.
    """
    xp, e1, e2, ls1, ls2, t, s = terms if terms is not None else reca_terms(x, beta, delta)
    g = t + s
    # sigmoid(-x) = e1 / (1 + e1), sigmoid(-2x) = e2 / (1 + e2)
    g_prime = 2 * beta * t * (e2 / (1 + e2)) + delta * s * (e1 / (1 + e1))
    d_x = np.where(x > 0, alpha * g + alpha * (xp * g_prime), 0)
    d_alpha = xp * g
    d_beta = alpha * (xp * t * ls2)
    d_delta = alpha * (xp * s * ls1)
    return d_x, d_alpha, d_beta, d_delta


def reca_input_grad_literal(x, alpha, beta, delta):
    """Input derivative with the first term written as alpha*f(x).

    This is the form in which the derivative is commonly misprinted; it is kept
    only so the gradient checker can demonstrate that it disagrees with finite
    differences.  Do not use it for training.
    """
    x = np.asarray(x, dtype=float)
    xp = np.maximum(x, 0)
    sech2 = 1 / np.cosh(xp) ** 2
    bracket = (beta * sech2 * (np.tanh(xp) + 1) ** (beta - 1) / 2 ** beta
               + delta * np.exp(-xp) * sigmoid(xp) ** (delta + 1))
    return np.where(x > 0, alpha * reca(x, alpha, beta, delta) + alpha * xp * bracket, 0.0)


def activation_forward(kind: ActivationKind, x, params: dict):
    """Apply ``kind`` elementwise.  ``params`` holds arrays for learnable names."""
    if isinstance(kind, ReCA):
        return reca(x, params["alpha"], params["beta"], params["delta"])
    if isinstance(kind, ReLU):
        return np.maximum(x, 0)
    if isinstance(kind, (LeakyReLU, PReLU)):
        slope = params["slope"] if isinstance(kind, PReLU) else kind.slope
        return np.where(x > 0, x, slope * x)
    if isinstance(kind, Swish):
        return x * sigmoid(x)
    if isinstance(kind, ParametricSwish):
        return x * sigmoid(params["beta"] * x)
    if isinstance(kind, Sigmoid):
        return sigmoid(x)
    if isinstance(kind, Tanh):
        return np.tanh(x)
    if isinstance(kind, ELU):
        return np.where(x > 0, x, kind.alpha * np.expm1(np.minimum(x, 0)))
    if isinstance(kind, SELU):
        return SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0)))
    if isinstance(kind, Linear):
        return x
    raise TypeError(f"not an activation kind: {kind!r}")


def activation_partials(kind: ActivationKind, x, params: dict):
    """Elementwise derivative w.r.t. the input and each learnable parameter.

    Returns ``(d_x, {name: d_param})``; parameter derivatives are elementwise and
    still have to be reduced over the positions sharing that parameter.
    """
    if isinstance(kind, ReCA):
        d_x, da, db, dd = reca_partials(x, params["alpha"], params["beta"], params["delta"])
        return d_x, {"alpha": da, "beta": db, "delta": dd}
    one = np.ones((), dtype=np.asarray(x).dtype)
    if isinstance(kind, ReLU):
        return np.where(x > 0, one, 0 * one), {}
    if isinstance(kind, LeakyReLU):
        return np.where(x > 0, one, kind.slope * one), {}
    if isinstance(kind, PReLU):
        return (np.where(x > 0, one, params["slope"] * one),
                {"slope": np.where(x > 0, 0 * one, x)})
    if isinstance(kind, Swish):
        s = sigmoid(x)
        return s + x * s * (1 - s), {}
    if isinstance(kind, ParametricSwish):
        b = params["beta"]
        s = sigmoid(b * x)
        ds = s * (1 - s)
        return s + b * x * ds, {"beta": x * x * ds}
    if isinstance(kind, Sigmoid):
        s = sigmoid(x)
        return s * (1 - s), {}
    if isinstance(kind, Tanh):
        return 1 - np.tanh(x) ** 2, {}
    if isinstance(kind, ELU):
        return np.where(x > 0, one, kind.alpha * np.exp(np.minimum(x, 0))), {}
    if isinstance(kind, SELU):
        return SELU_LAMBDA * np.where(x > 0, one, SELU_ALPHA * np.exp(np.minimum(x, 0))), {}
    if isinstance(kind, Linear):
        return np.ones_like(x), {}
    raise TypeError(f"not an activation kind: {kind!r}")


# -- validated scalar API ------------------------------------------------------

def _check_input(x):
    """float64 scalar or array; raises on NaN or infinity anywhere."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInputError(f"activation input must be finite, got {x!r}" if arr.ndim == 0
                                  else "activation input contains NaN or infinity")
    return arr if arr.ndim else np.float64(arr)


def _result(v):
    return float(v) if np.ndim(v) == 0 else v


def _check_params(p: RecaParams) -> RecaParams:
    if not isinstance(p, RecaParams):
        raise TypeError(f"expected RecaParams, got {type(p).__name__}")
    # RecaParams validates on construction, but object.__setattr__ can bypass it
    RecaParams(*p.as_tuple())
    return p


# The validated functions below take a float or an array of floats and return
# the same kind.


def reca_forward(x, p: RecaParams = RecaParams()):
    x = _check_input(x)
    _check_params(p)
    return _result(reca(x, *p.as_tuple()))


def reca_input_grad(x, p: RecaParams = RecaParams()):
    x = _check_input(x)
    _check_params(p)
    return _result(reca_partials(x, *p.as_tuple())[0])


def reca_param_grads(x, p: RecaParams = RecaParams()):
    """(df/dalpha, df/dbeta, df/ddelta) at ``x``."""
    x = _check_input(x)
    _check_params(p)
    _, da, db, dd = reca_partials(x, *p.as_tuple())
    return _result(da), _result(db), _result(dd)


def baseline_forward(kind: ActivationKind, x):
    x = _check_input(x)
    return _result(activation_forward(kind, x, initial_params(kind)))


def baseline_input_grad(kind: ActivationKind, x):
    x = _check_input(x)
    return _result(activation_partials(kind, x, initial_params(kind))[0])


def baseline_param_grads(kind: ActivationKind, x) -> dict:
    x = _check_input(x)
    _, grads = activation_partials(kind, x, initial_params(kind))
    return {k: _result(v) for k, v in grads.items()}


def prelu_param_grad(x: float) -> float:
    """d PReLU(x) / d slope: ``x`` on the non-positive branch, else 0."""
    x = _check_input(x)
    return _result(np.where(x <= 0, x, 0.0))
