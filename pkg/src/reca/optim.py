"""Optimizers, the cosine learning-rate schedule, and activation-parameter regularization."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from reca.activations import ALPHA_MIN


@dataclass(frozen=True)
class ScheduleSpec:
    lr0: float
    total_epochs: int
    eta_min: float = 1e-4

    def __post_init__(self):
        if not self.lr0 > self.eta_min > 0:
            raise ValueError(f"need lr0 > eta_min > 0, got lr0={self.lr0}, eta_min={self.eta_min}")
        if self.total_epochs < 1:
            raise ValueError(f"total_epochs must be >= 1, got {self.total_epochs}")


def cosine_lr(epoch: int, s: ScheduleSpec) -> float:
    """Half-cosine decay from ``lr0`` at epoch 0 to ``eta_min`` at ``total_epochs``.

    Written as a convex combination so both endpoints are returned exactly.
    """
    if not 0 <= epoch <= s.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {s.total_epochs}]")
    w = (1 + math.cos(math.pi * epoch / s.total_epochs)) / 2
    return s.lr0 * w + s.eta_min * (1 - w)


def _check_aligned(params, grads, buffers):
    if len(params) != len(grads) or len(params) != len(buffers):
        raise ValueError("params, grads and optimizer state must have the same length")
    for p, g, b in zip(params, grads, buffers):
        if p.shape != g.shape or p.shape != b.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {b.shape}")


@dataclass
class SGDState:
    velocity: list
    momentum: float = 0.9


@dataclass
class AdamState:
    m: list
    v: list
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0


def sgd_state(params, momentum=0.9) -> SGDState:
    return SGDState([np.zeros_like(p) for p in params], momentum)


def adam_state(params, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    return AdamState([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], beta1, beta2, eps)


def sgd_step(params, grads, state: SGDState, lr, scales=None):
    """In place: ``v <- momentum * v + g``; ``p <- p - lr * v``.

    ``scales`` optionally multiplies the learning rate per parameter.
    """
    _check_aligned(params, grads, state.velocity)
    for i, (p, g, v) in enumerate(zip(params, grads, state.velocity)):
        v *= state.momentum
        v += g
        step_lr = lr if scales is None else lr * scales[i]
        p -= (step_lr * v).astype(p.dtype, copy=False)
    return params, state


def adam_step(params, grads, state: AdamState, lr, scales=None):
    """In place bias-corrected Adam update."""
    _check_aligned(params, grads, state.m)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** state.step
    c2 = 1 - b2 ** state.step
    for i, (p, g, m, v) in enumerate(zip(params, grads, state.m, state.v)):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        step_lr = lr if scales is None else lr * scales[i]
        p -= (step_lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return params, state


class Optimizer:
    """Binds an update rule to a model's ``Param`` list.

    ``activation_lr_scale`` multiplies the learning rate of activation
    parameters only; 0 freezes them.
    """

    def __init__(self, params, kind="sgd", momentum=0.9, activation_lr_scale=1.0):
        self.params = list(params)
        self.kind = kind
        self.scales = [activation_lr_scale if p.activation else 1.0 for p in self.params]
        values = [p.value for p in self.params]
        if kind == "sgd":
            self.state = sgd_state(values, momentum)
        elif kind == "adam":
            self.state = adam_state(values)
        else:
            raise ValueError(f"unknown optimizer {kind!r}; choose 'sgd' or 'adam'")

    def step(self, lr):
        values = [p.value for p in self.params]
        grads = [p.grad for p in self.params]
        if self.kind == "sgd":
            sgd_step(values, grads, self.state, lr, self.scales)
        else:
            adam_step(values, grads, self.state, lr, self.scales)


def activation_l2(act_params, strength=1e-7):
    """``strength * sum(p**2)`` and its gradient ``2 * strength * p`` per array.

    ``act_params`` is a list of arrays (or ``Param`` objects, of which only
    those flagged as activation parameters are used).
    """
    if strength < 0:
        raise ValueError(f"L2 strength must be >= 0, got {strength}")
    arrays = []
    for p in act_params:
        if hasattr(p, "activation"):
            if not p.activation:
                continue
            p = p.value
        arrays.append(np.asarray(p))
    penalty = strength * sum(float(np.sum(a.astype(np.float64) ** 2)) for a in arrays)
    return penalty, [2 * strength * a for a in arrays]


def apply_activation_l2(params, strength=1e-7) -> float:
    """Add the L2 gradient to every activation ``Param`` in place; return the penalty."""
    act = [p for p in params if p.activation]
    penalty, grads = activation_l2([p.value for p in act], strength)
    if strength:
        for p, g in zip(act, grads):
            p.grad += g.astype(p.grad.dtype, copy=False)
    return penalty


def project_activation_params(layer, alpha_min=ALPHA_MIN):
    """Clamp a layer's ReCA parameters into their domain (in place) and return it."""
    layer.project(alpha_min)
    return layer
