"""Runtime layers: parameter storage plus forward/backward over the kernels."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from reca import activations as act
from reca.nn import functional as F


@dataclass(eq=False)
class Param:
    """A learnable array and its accumulated gradient.

    ``activation`` marks activation parameters (ReCA alpha/beta/delta, PReLU
    slopes, swish beta): only these receive the L2 penalty and projection.
    """
    value: np.ndarray
    grad: np.ndarray = None
    activation: bool = False
    role: str = "weight"

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)

    @property
    def size(self) -> int:
        return self.value.size


class Layer:
    params: dict[str, Param] = {}

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, upstream):
        raise NotImplementedError

    def zero_grad(self):
        for p in self.params.values():
            p.grad[...] = 0


def kaiming_uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class DenseLayer(Layer):
    def __init__(self, in_features, out_features, bias, rng, dtype):
        self.params = {"weight": Param(kaiming_uniform(rng, (in_features, out_features), in_features, dtype))}
        if bias:
            self.params["bias"] = Param(np.zeros(out_features, dtype=dtype), role="bias")

    def forward(self, x, training=False):
        bias = self.params["bias"].value if "bias" in self.params else None
        y, self._ctx = F.dense_forward(x, self.params["weight"].value, bias)
        return y

    def backward(self, upstream):
        dx, dw, db = F.dense_backward(self._ctx, upstream)
        self.params["weight"].grad += dw
        if db is not None:
            self.params["bias"].grad += db
        return dx


class Conv2DLayer(Layer):
    def __init__(self, in_ch, out_ch, kernel, stride, pad, bias, rng, dtype):
        fan_in = in_ch * kernel * kernel
        self.params = {"weight": Param(kaiming_uniform(rng, (out_ch, in_ch, kernel, kernel), fan_in, dtype))}
        if bias:
            self.params["bias"] = Param(np.zeros(out_ch, dtype=dtype), role="bias")
        self.stride, self.pad = stride, pad

    def forward(self, x, training=False):
        bias = self.params["bias"].value if "bias" in self.params else None
        y, self._ctx = F.conv2d_forward(x, self.params["weight"].value, bias, self.stride, self.pad)
        return y

    def backward(self, upstream):
        dx, dk, db = F.conv2d_backward(self._ctx, upstream)
        self.params["weight"].grad += dk
        if db is not None:
            self.params["bias"].grad += db
        return dx


class BatchNormLayer(Layer):
    def __init__(self, channels, eps, momentum, dtype):
        self.params = {
            "gamma": Param(np.ones(channels, dtype=dtype), role="bn"),
            "beta": Param(np.zeros(channels, dtype=dtype), role="bn"),
        }
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.eps, self.momentum = eps, momentum

    def forward(self, x, training=False):
        y, self._ctx = F.batchnorm_forward(
            x, self.params["gamma"].value, self.params["beta"].value,
            self.running_mean, self.running_var, self.eps, self.momentum, training)
        return y

    def backward(self, upstream):
        dx, dg, db = F.batchnorm_backward(self._ctx, upstream)
        self.params["gamma"].grad += dg
        self.params["beta"].grad += db
        return dx


class MaxPoolLayer(Layer):
    def __init__(self, k, stride):
        self.params = {}
        self.k, self.stride = k, stride

    def forward(self, x, training=False):
        y, self._ctx = F.maxpool_forward(x, self.k, self.stride)
        return y

    def backward(self, upstream):
        return F.maxpool_backward(self._ctx, upstream)


class GlobalAvgPoolLayer(Layer):
    def __init__(self):
        self.params = {}

    def forward(self, x, training=False):
        y, self._ctx = F.global_avgpool_forward(x)
        return y

    def backward(self, upstream):
        return F.global_avgpool_backward(self._ctx, upstream)


class FlattenLayer(Layer):
    def __init__(self):
        self.params = {}

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, upstream):
        return upstream.reshape(self._shape)


GRANULARITIES = ("global", "channel", "neuron")


class ActivationLayer(Layer):
    """Elementwise activation with optionally learnable, shared parameters.

    ``feature_shape`` is the per-sample input shape.  The channel axis is axis
    1 of the batched input; for 2-D inputs features are the channels.
    """

    def __init__(self, kind, granularity, feature_shape, dtype):
        if granularity not in GRANULARITIES:
            raise ValueError(f"granularity must be one of {GRANULARITIES}, got {granularity!r}")
        self.kind = kind
        self.granularity = granularity
        self.feature_shape = tuple(feature_shape)
        ndim = len(self.feature_shape) + 1
        if granularity == "global":
            self.site_shape = (1,)
            self._bshape = (1,) * ndim
        elif granularity == "channel":
            self.site_shape = (self.feature_shape[0],)
            self._bshape = (1, self.feature_shape[0]) + (1,) * (ndim - 2)
        else:
            self.site_shape = self.feature_shape
            self._bshape = (1,) + self.feature_shape
        self._reduce = tuple(i for i, s in enumerate(self._bshape) if s == 1)
        self.params = {
            name: Param(np.full(self.site_shape, value, dtype=dtype), activation=True, role=name)
            for name, value in act.initial_params(kind).items()
        }

    @property
    def sites(self) -> int:
        return int(np.prod(self.site_shape)) if self.params else 0

    def _values(self):
        return {k: p.value.reshape(self._bshape) for k, p in self.params.items()}

    def forward(self, x, training=False):
        if x.shape[1:] != self.feature_shape:
            raise F.ShapeError(f"activation: expected features {self.feature_shape}, got {x.shape[1:]}")
        self._x = x
        values = self._values()
        if isinstance(self.kind, act.ReCA):
            self._terms = act.reca_terms(x, values["beta"], values["delta"])
            return act.reca(x, values["alpha"], values["beta"], values["delta"], self._terms)
        return act.activation_forward(self.kind, x, values)

    def backward(self, upstream):
        values = self._values()
        if isinstance(self.kind, act.ReCA):
            d_x, da, db, dd = act.reca_partials(self._x, values["alpha"], values["beta"], values["delta"],
                                                self._terms)
            d_params = {"alpha": da, "beta": db, "delta": dd}
        else:
            d_x, d_params = act.activation_partials(self.kind, self._x, values)
        for name, d in d_params.items():
            # parameter sharing: sum over batch and every shared position
            self.params[name].grad += (upstream * d).sum(axis=self._reduce).reshape(self.site_shape)
        return upstream * d_x

    def project(self, alpha_min=act.ALPHA_MIN):
        """Clamp ReCA parameters back into alpha >= alpha_min, beta, delta >= 0."""
        if isinstance(self.kind, act.ReCA):
            alpha = self.params["alpha"].value
            # float32(1e-4) is just below 1e-4; round the floor up so alpha >= alpha_min holds exactly
            floor = alpha.dtype.type(alpha_min)
            if float(floor) < alpha_min:
                floor = np.nextafter(floor, alpha.dtype.type(np.inf))
            np.maximum(alpha, floor, out=alpha)
            np.maximum(self.params["beta"].value, 0, out=self.params["beta"].value)
            np.maximum(self.params["delta"].value, 0, out=self.params["delta"].value)


class ResidualLayer(Layer):
    """``block(x) + shortcut(x)``; the shortcut is identity or a 1x1 projection."""

    def __init__(self, block: list[Layer], projection: Layer | None):
        self.block = block
        self.projection = projection
        self.params = {}
        for i, layer in enumerate(block):
            for name, p in layer.params.items():
                self.params[f"{i}.{name}"] = p
        if projection is not None:
            for name, p in projection.params.items():
                self.params[f"shortcut.{name}"] = p

    def sublayers(self):
        yield from self.block
        if self.projection is not None:
            yield self.projection

    def forward(self, x, training=False):
        y = x
        for layer in self.block:
            y = layer.forward(y, training)
        short = x if self.projection is None else self.projection.forward(x, training)
        return y + short

    def backward(self, upstream):
        g = upstream
        for layer in reversed(self.block):
            g = layer.backward(g)
        short = upstream if self.projection is None else self.projection.backward(upstream)
        return g + short
