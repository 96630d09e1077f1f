"""Curve sweeps of ReCA and its derivatives, and output landscapes of a random network."""
from __future__ import annotations

import numpy as np

from reca import activations as act
from reca.data import philox, synth_grid2d
from reca.nn import model as M

SWEEP_COLUMNS = ("x", "beta", "delta", "f", "f1", "f2")
LANDSCAPE_COLUMNS = ("x1", "x2", "output", "activation", "seed")
F2_STEP = 1e-4


def _preset_pairs(name):
    if name == "figure-1":
        # tanh term alone (delta = 0), then the sigmoid term alone (beta = 0)
        return [(float(b), 0.0) for b in range(6)] + [(0.0, float(d)) for d in range(1, 6)]
    if name == "figure-2":
        return [(k / 4, k / 4) for k in range(1, 8)]
    raise ValueError(f"unknown sweep preset {name!r}; choose 'figure-1' or 'figure-2'")


SWEEP_PRESETS = ("figure-1", "figure-2")


def x_grid(x_min=-3.0, x_max=3.0, step=0.01) -> np.ndarray:
    """Grid ``i / k`` with ``k = round(1 / step)`` so integers are hit exactly."""
    k = round(1 / step)
    if k <= 0 or not np.isclose(k * step, 1.0):
        raise ValueError(f"step must be the reciprocal of a positive integer, got {step}")
    return np.arange(round(x_min * k), round(x_max * k) + 1) / k


def sweep_curves(pairs=None, alpha=0.5, x_min=-3.0, x_max=3.0, step=0.01, preset=None) -> np.ndarray:
    """Rows of (x, beta, delta, f, f', f'') for each (beta, delta) pair.

    f and f' are analytic; f'' is a central difference of f' with step 1e-4.
    Returns an array with columns ``SWEEP_COLUMNS``.
    """
    if preset is not None:
        pairs = _preset_pairs(preset)
    if not pairs:
        raise ValueError("at least one (beta, delta) pair is required")
    x = x_grid(x_min, x_max, step)
    if x.size == 0:
        raise ValueError(f"empty x range [{x_min}, {x_max}]")
    blocks = []
    for beta, delta in pairs:
        act.RecaParams(alpha, beta, delta)  # domain check
        f = act.reca(x, alpha, beta, delta)
        f1 = act.reca_partials(x, alpha, beta, delta)[0]
        f2 = (act.reca_partials(x + F2_STEP, alpha, beta, delta)[0]
              - act.reca_partials(x - F2_STEP, alpha, beta, delta)[0]) / (2 * F2_STEP)
        blocks.append(np.column_stack([x, np.full_like(x, beta), np.full_like(x, delta), f, f1, f2]))
    return np.concatenate(blocks)


# -- output landscapes -----------------------------------------------------------------

LANDSCAPE_WEIGHT_RANGE = 0.05


def landscape_model(kind, net_seed=0) -> M.Model:
    """4-layer MLP with weights uniform in (-0.05, 0.05) and zero biases.

    Weights depend only on ``net_seed``, so two activations with the same seed
    see identical weights.
    """
    model = M.Model(M.landscape_net(kind), seed=net_seed, dtype=np.float64)
    rng = philox(net_seed, 20)
    for _, p in model.named_params():
        if p.activation:
            continue
        if p.role == "bias":
            p.value[...] = 0
        else:
            p.value[...] = rng.uniform(-LANDSCAPE_WEIGHT_RANGE, LANDSCAPE_WEIGHT_RANGE, p.value.shape)
    return model


def landscape(kind, net_seed=0, n_points=1024) -> np.ndarray:
    """Network output over the square grid on [-1, 1]^2; rows (x1, x2, output)."""
    grid = synth_grid2d(n_points).images
    out = landscape_model(kind, net_seed).forward(grid)
    return np.column_stack([grid, out[:, 0]])


def max_second_difference(rows: np.ndarray) -> float:
    """Largest absolute discrete second difference (along x1, along x2, mixed)."""
    side = round(np.sqrt(len(rows)))
    z = rows[:, 2].reshape(side, side)
    d11 = z[2:, :] - 2 * z[1:-1, :] + z[:-2, :]
    d22 = z[:, 2:] - 2 * z[:, 1:-1] + z[:, :-2]
    d12 = z[1:, 1:] - z[1:, :-1] - z[:-1, 1:] + z[:-1, :-1]
    return float(max(np.abs(d11).max(), np.abs(d22).max(), np.abs(d12).max()))


def kind_label(kind) -> str:
    if isinstance(kind, act.ReCA):
        return "reca({:g},{:g},{:g})".format(*kind.params.as_tuple())
    return kind.name
