"""Analytic-versus-finite-difference gradient checks for every activation and layer.

Scalar activations are checked against central differences (step 1e-6) of an
independent mpmath evaluation at 40 significant digits, written from the tanh
form of ReCA rather than the sigmoid(2x) form used by the implementation.
Plain float64 differences carry ~1e-10 absolute rounding noise, which is
larger than 1e-6 of some legitimately tiny parameter gradients (d/dbeta at
large x, for instance).

Layers are checked by comparing the analytic gradient of ``sum(output * R)``
(R a fixed random tensor) computed at the requested precision with float64
central differences of the same network, using the norm-wise relative error
``|a - n| / max(|a|, |n|)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import mpmath
import numpy as np

from reca import activations as act
from reca.data import philox
from reca.nn import model as M
from reca.nn.functional import softmax_cross_entropy

SCALAR_TOL = 1e-6
LAYER_TOL = {"float32": 1e-4, "float64": 1e-6}
FD_STEP = 1e-6
MP_DIGITS = 40


@dataclass
class ComponentResult:
    name: str
    max_rel_err: float
    tol: float
    worst_case: str = ""
    analytic: float = float("nan")
    numeric: float = float("nan")

    @property
    def passed(self) -> bool:
        # tol == 0 demands exact agreement
        return self.max_rel_err < self.tol or self.max_rel_err == self.tol == 0


@dataclass
class GradcheckReport:
    components: list = field(default_factory=list)
    erratum: dict | None = None

    @property
    def passed(self) -> bool:
        ok = all(c.passed for c in self.components)
        if self.erratum is not None:
            ok = ok and self.erratum["literal_rel_err"] > 0.1 and self.erratum["corrected_rel_err"] < SCALAR_TOL
        return ok

    def failures(self):
        return [c for c in self.components if not c.passed]

    def format_table(self) -> str:
        lines = [f"{'component':<34} {'max rel err':>12} {'tol':>8}  status"]
        for c in self.components:
            lines.append(f"{c.name:<34} {c.max_rel_err:>12.3e} {c.tol:>8.0e}  {'PASS' if c.passed else 'FAIL'}")
            if not c.passed:
                lines.append(f"    worst at {c.worst_case}: analytic={c.analytic!r} numeric={c.numeric!r}")
        if self.erratum is not None:
            e = self.erratum
            lines.append(f"erratum at x={e['x']}, p={e['params']}: finite difference {e['numeric']:.12g}")
            lines.append(f"  first term alpha*f(x): {e['literal']:.12g}  rel err {e['literal_rel_err']:.3e}")
            lines.append(f"  first term alpha*g(x): {e['corrected']:.12g}  rel err {e['corrected_rel_err']:.3e}")
        return "\n".join(lines)


def rel_err(a, n) -> float:
    a, n = float(a), float(n)
    scale = max(abs(a), abs(n))
    return 0.0 if scale == 0 else abs(a - n) / scale


# -- independent high-precision oracles -------------------------------------------

def _mp_sigmoid(z):
    return 1 / (1 + mpmath.exp(-z))


def mp_reca(x, alpha, beta, delta):
    x = mpmath.mpf(x)
    if x <= 0:
        return mpmath.mpf(0)
    return alpha * x * (((1 + mpmath.tanh(x)) / 2) ** beta + _mp_sigmoid(x) ** delta)


MP_BASELINES = {
    "relu": lambda x, p: max(x, 0),
    "leaky_relu": lambda x, p: x if x > 0 else p["slope"] * x,
    "prelu": lambda x, p: x if x > 0 else p["slope"] * x,
    "swish": lambda x, p: x * _mp_sigmoid(x),
    "pswish": lambda x, p: x * _mp_sigmoid(p["beta"] * x),
    "sigmoid": lambda x, p: _mp_sigmoid(x),
    "tanh": lambda x, p: mpmath.tanh(x),
    "elu": lambda x, p: x if x > 0 else p["alpha"] * (mpmath.exp(x) - 1),
    "selu": lambda x, p: mpmath.mpf(act.SELU_LAMBDA) * (x if x > 0 else act.SELU_ALPHA * (mpmath.exp(x) - 1)),
}


def mp_central_diff(fn, at, step=FD_STEP):
    with mpmath.workdps(MP_DIGITS):
        at = mpmath.mpf(at)
        h = mpmath.mpf(step)
        return float((fn(at + h) - fn(at - h)) / (2 * h))


def _sample_x(rng, lo=-5.0, hi=5.0, min_abs=1e-3):
    while True:
        x = float(rng.uniform(lo, hi))
        if abs(x) >= min_abs:
            return x


# -- scalar suites -----------------------------------------------------------------

def check_reca(trials=1000, seed=0) -> list[ComponentResult]:
    rng = philox(seed, 10)
    names = ("reca.input", "reca.alpha", "reca.beta", "reca.delta")
    results = {n: ComponentResult(n, 0.0, SCALAR_TOL) for n in names}
    relu_red = ComponentResult("reca.relu_reduction", 0.0, 0.0)
    for _ in range(trials):
        x = _sample_x(rng)
        a, b, d = float(rng.uniform(0.1, 2)), float(rng.uniform(0, 5)), float(rng.uniform(0, 5))
        p = act.RecaParams(a, b, d)
        analytic = (act.reca_input_grad(x, p),) + act.reca_param_grads(x, p)
        numeric = (
            mp_central_diff(lambda t: mp_reca(t, a, b, d), x),
            mp_central_diff(lambda t: mp_reca(x, t, b, d), a),
            mp_central_diff(lambda t: mp_reca(x, a, t, d), b),
            mp_central_diff(lambda t: mp_reca(x, a, b, t), d),
        )
        for name, an, nu in zip(names, analytic, numeric):
            e = rel_err(an, nu)
            r = results[name]
            if e > r.max_rel_err:
                results[name] = ComponentResult(name, e, SCALAR_TOL, f"x={x!r}, p=({a!r}, {b!r}, {d!r})", an, nu)
        if x > 0:
            g = act.reca_input_grad(x, act.RecaParams(0.5, 0.0, 0.0))
            if abs(g - 1.0) > relu_red.max_rel_err:
                relu_red = ComponentResult(relu_red.name, abs(g - 1.0), relu_red.tol, f"x={x!r}", g, 1.0)
    return list(results.values()) + [relu_red]


def _random_kind(name, rng):
    if name == "prelu":
        return act.PReLU(float(rng.uniform(0.0, 0.5)))
    if name == "pswish":
        return act.ParametricSwish(float(rng.uniform(0.1, 3.0)))
    if name == "elu":
        return act.ELU(float(rng.uniform(0.5, 2.0)))
    return act.kind_from_name(name)


def _kind_params(kind):
    p = act.initial_params(kind)
    if isinstance(kind, act.LeakyReLU):
        p["slope"] = kind.slope
    if isinstance(kind, act.ELU):
        p["alpha"] = kind.alpha
    return p


def check_baselines(trials=1000, seed=0) -> list[ComponentResult]:
    rng = philox(seed, 11)
    out = []
    for name, oracle in MP_BASELINES.items():
        comps = {f"{name}.input": ComponentResult(f"{name}.input", 0.0, SCALAR_TOL)}
        for _ in range(trials):
            kind = _random_kind(name, rng)
            x = _sample_x(rng)
            p = _kind_params(kind)
            checks = [(f"{name}.input", act.baseline_input_grad(kind, x),
                       mp_central_diff(lambda t: oracle(t, p), x))]
            for pname, an in act.baseline_param_grads(kind, x).items():
                nu = mp_central_diff(lambda t: oracle(x, {**p, pname: t}), p[pname])
                checks.append((f"{name}.{pname}", an, nu))
            for cname, an, nu in checks:
                e = rel_err(an, nu)
                cur = comps.setdefault(cname, ComponentResult(cname, 0.0, SCALAR_TOL))
                if e > cur.max_rel_err:
                    comps[cname] = ComponentResult(cname, e, SCALAR_TOL, f"x={x!r}, kind={kind!r}", an, nu)
        out.extend(comps.values())
    return out


def erratum_check(x=1.0, params=act.RecaParams(0.5, 1.0, 1.0)) -> dict:
    """Compare both first-term variants of the input derivative with finite differences."""
    a, b, d = params.as_tuple()
    numeric = mp_central_diff(lambda t: mp_reca(t, a, b, d), x)
    literal = float(act.reca_input_grad_literal(x, a, b, d))
    corrected = act.reca_input_grad(x, params)
    return {
        "x": x, "params": params.as_tuple(), "numeric": numeric,
        "literal": literal, "literal_rel_err": rel_err(literal, numeric),
        "corrected": corrected, "corrected_rel_err": rel_err(corrected, numeric),
    }


# -- composed layers ---------------------------------------------------------------

def _copy_values(src: M.Model, dst: M.Model):
    for (_, p), (_, q) in zip(src.named_params(), dst.named_params()):
        q.value[...] = p.value


def _set_random_activation_params(model: M.Model, rng):
    for layer in model.activation_layers():
        for name, p in layer.params.items():
            if name == "alpha":
                p.value[...] = rng.uniform(0.2, 1.5, p.value.shape)
            elif name in ("beta", "delta") and isinstance(layer.kind, act.ReCA):
                p.value[...] = rng.uniform(0.0, 3.0, p.value.shape)
            elif name == "beta":
                p.value[...] = rng.uniform(0.5, 2.0, p.value.shape)
            elif name == "slope":
                p.value[...] = rng.uniform(0.0, 0.5, p.value.shape)


def check_model(spec: M.ModelSpec, x, precision="float32", seed=0, training=True,
                max_coords=40, loss="projection") -> ComponentResult:
    """Norm-wise relative error of every parameter gradient and the input gradient.

    At most ``max_coords`` coordinates of each array are differenced (all of
    them for small arrays); the same coordinates are compared analytically.
    """
    rng = philox(seed, 12)
    dtype = np.dtype(precision)
    m_lo = M.Model(spec, seed=seed, dtype=dtype)
    _set_random_activation_params(m_lo, rng)
    m_hi = M.Model(spec, seed=seed, dtype=np.float64)
    _copy_values(m_lo, m_hi)
    x_lo = np.asarray(x, dtype=dtype)
    x_hi = x_lo.astype(np.float64)

    out = m_lo.forward(x_lo, training)
    if loss == "cross_entropy":
        labels = rng.integers(0, out.shape[1], size=out.shape[0])
        _, d_out = softmax_cross_entropy(out, labels)
        objective = lambda o: softmax_cross_entropy(o, labels)[0]
    else:
        proj = rng.standard_normal(out.shape)
        d_out = proj.astype(dtype)
        objective = lambda o: float(np.sum(o * proj))
    grads = M.model_backward(m_lo, d_out)

    arrays = [(name, p.value) for name, p in m_hi.named_params()] + [("input", x_hi)]
    worst = ComponentResult("", 0.0, LAYER_TOL[precision])
    for name, arr in arrays:
        flat = arr.reshape(-1)
        coords = np.arange(flat.size)
        if flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, max_coords, replace=False))
        numeric = np.empty(len(coords))
        for j, c in enumerate(coords):
            orig = flat[c]
            flat[c] = orig + FD_STEP
            plus = objective(m_hi.forward(x_hi, training))
            flat[c] = orig - FD_STEP
            minus = objective(m_hi.forward(x_hi, training))
            flat[c] = orig
            numeric[j] = (plus - minus) / (2 * FD_STEP)
        analytic = grads[name].reshape(-1)[coords].astype(np.float64)
        scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
        e = 0.0 if scale == 0 else float(np.linalg.norm(analytic - numeric) / scale)
        if e >= worst.max_rel_err:
            worst = ComponentResult("", e, worst.tol, name,
                                    float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
    return worst


def layer_cases(rng):
    """Small networks isolating each layer type, with matching random inputs."""
    reca = act.ReCA()
    cases = {
        "dense": (M.ModelSpec((M.Dense(4, 3),), None, (4,)), (3, 4)),
        "conv2d": (M.ModelSpec((M.Conv2D(2, 3, 3, 2, 1),), None, (2, 5, 5)), (1, 2, 5, 5)),
        "batchnorm.2d": (M.ModelSpec((M.BatchNorm(4),), None, (4,)), (8, 4)),
        "batchnorm.4d": (M.ModelSpec((M.BatchNorm(3),), None, (3, 4, 4)), (2, 3, 4, 4)),
        "maxpool": (M.ModelSpec((M.MaxPool(2, 2),), None, (2, 4, 4)), (2, 2, 4, 4)),
        "global_avgpool": (M.ModelSpec((M.GlobalAvgPool(),), None, (3, 4, 4)), (2, 3, 4, 4)),
        "activation.reca.channel": (M.ModelSpec((M.Activation(reca, "channel"),), None, (3, 4, 4)), (2, 3, 4, 4)),
        "activation.reca.neuron": (M.ModelSpec((M.Activation(reca, "neuron"),), None, (5,)), (4, 5)),
        "activation.prelu.neuron": (M.ModelSpec((M.Activation(act.PReLU(), "neuron"),), None, (2, 3, 3)), (2, 2, 3, 3)),
        "activation.pswish.global": (M.ModelSpec((M.Activation(act.ParametricSwish(), "global"),), None, (6,)), (3, 6)),
        "residual.projection": (M.ModelSpec((M.Residual((M.Conv2D(2, 3, 3, 1, 1, bias=False), M.BatchNorm(3),
                                                          M.Activation(reca, "channel"))),), None, (2, 4, 4)),
                                (3, 2, 4, 4)),
        "mlp.cross_entropy": (M.mlp(3, (6, 5), 4, kind=reca), (5, 3)),
        "mini_cnn.cross_entropy": (M.mini_cnn(3, reca, widths=(3, 4, 4), input_shape=(2, 8, 8)), (4, 2, 8, 8)),
        "mini_resnet.cross_entropy": (M.mini_resnet(3, reca, widths=(3, 4, 4), input_shape=(2, 8, 8)), (4, 2, 8, 8)),
    }
    return {name: (spec, rng.standard_normal(shape)) for name, (spec, shape) in cases.items()}


def check_layers(seed=0, precision="float32") -> list[ComponentResult]:
    rng = philox(seed, 13)
    out = []
    for name, (spec, x) in layer_cases(rng).items():
        loss = "cross_entropy" if name.endswith("cross_entropy") else "projection"
        r = check_model(spec, x, precision, seed=seed, loss=loss)
        r.name = f"layer.{name}"
        r.worst_case = f"param {r.worst_case}"
        out.append(r)
    return out


def check_softmax_ce(seed=0, n=4, k=10) -> ComponentResult:
    rng = philox(seed, 14)
    logits = rng.standard_normal((n, k))
    labels = rng.integers(0, k, size=n)
    _, grad = softmax_cross_entropy(logits, labels)
    worst = ComponentResult("softmax_cross_entropy", 0.0, SCALAR_TOL)
    for i in range(n):
        for j in range(k):
            def f(t, i=i, j=j):
                z = [[mpmath.mpf(v) for v in row] for row in logits]
                z[i][j] = t
                return sum(mpmath.log(sum(mpmath.exp(v) for v in row)) - row[c]
                           for row, c in zip(z, labels)) / n
            nu = mp_central_diff(f, logits[i, j])
            e = rel_err(grad[i, j], nu)
            if e > worst.max_rel_err:
                worst = ComponentResult(worst.name, e, worst.tol, f"logit[{i},{j}]", float(grad[i, j]), nu)
    return worst


def run_gradcheck(seed=0, trials=1000, erratum=False, layers=True, precision="float32") -> GradcheckReport:
    report = GradcheckReport()
    report.components += check_reca(trials, seed)
    report.components += check_baselines(trials, seed)
    report.components.append(check_softmax_ce(seed))
    if layers:
        report.components += check_layers(seed, precision)
    if erratum:
        report.erratum = erratum_check()
    return report
