"""Declarative model descriptions, their static shape check, and the runtime model."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from reca import activations as act
from reca.nn import layers as L
from reca.nn.functional import ShapeError, conv_output_size


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int
    bias: bool = True


@dataclass(frozen=True)
class Conv2D:
    in_ch: int
    out_ch: int
    kernel: int = 3
    stride: int = 1
    pad: int = 1
    bias: bool = True


@dataclass(frozen=True)
class BatchNorm:
    channels: int
    eps: float = 1e-5
    momentum: float = 0.1


@dataclass(frozen=True)
class MaxPool:
    k: int = 2
    stride: int = 2


@dataclass(frozen=True)
class GlobalAvgPool:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Activation:
    kind: act.ActivationKind = field(default_factory=act.ReLU)
    granularity: str = "channel"


@dataclass(frozen=True)
class Residual:
    block: tuple


LayerSpec = Union[Dense, Conv2D, BatchNorm, MaxPool, GlobalAvgPool, Flatten, Activation, Residual]


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple = ()
    num_classes: int | None = None
    input_shape: tuple = ()


def _build_layer(spec, shape, rng, dtype):
    """Instantiate one layer for per-sample input ``shape``; return (layer, out_shape)."""
    if isinstance(spec, Dense):
        if shape != (spec.in_features,):
            raise ShapeError(f"{spec} expects input ({spec.in_features},), got {shape}")
        return L.DenseLayer(spec.in_features, spec.out_features, spec.bias, rng, dtype), (spec.out_features,)
    if isinstance(spec, Conv2D):
        if len(shape) != 3 or shape[0] != spec.in_ch:
            raise ShapeError(f"{spec} expects input ({spec.in_ch}, H, W), got {shape}")
        h = conv_output_size(shape[1], spec.kernel, spec.stride, spec.pad)
        w = conv_output_size(shape[2], spec.kernel, spec.stride, spec.pad)
        layer = L.Conv2DLayer(spec.in_ch, spec.out_ch, spec.kernel, spec.stride, spec.pad, spec.bias, rng, dtype)
        return layer, (spec.out_ch, h, w)
    if isinstance(spec, BatchNorm):
        if len(shape) not in (1, 3) or shape[0] != spec.channels:
            raise ShapeError(f"{spec} does not match input {shape}")
        return L.BatchNormLayer(spec.channels, spec.eps, spec.momentum, dtype), shape
    if isinstance(spec, MaxPool):
        if len(shape) != 3:
            raise ShapeError(f"{spec} needs a (C, H, W) input, got {shape}")
        h = conv_output_size(shape[1], spec.k, spec.stride, 0)
        w = conv_output_size(shape[2], spec.k, spec.stride, 0)
        return L.MaxPoolLayer(spec.k, spec.stride), (shape[0], h, w)
    if isinstance(spec, GlobalAvgPool):
        if len(shape) != 3:
            raise ShapeError(f"global average pooling needs a (C, H, W) input, got {shape}")
        return L.GlobalAvgPoolLayer(), (shape[0],)
    if isinstance(spec, Flatten):
        return L.FlattenLayer(), (int(np.prod(shape)),)
    if isinstance(spec, Activation):
        return L.ActivationLayer(spec.kind, spec.granularity, shape, dtype), shape
    if isinstance(spec, Residual):
        block, out = [], shape
        for sub in spec.block:
            layer, out = _build_layer(sub, out, rng, dtype)
            block.append(layer)
        if out == shape:
            projection = None
        elif len(shape) == len(out) and shape[1:] == out[1:]:
            if len(shape) == 3:
                projection = L.Conv2DLayer(shape[0], out[0], 1, 1, 0, False, rng, dtype)
            else:
                projection = L.DenseLayer(shape[0], out[0], False, rng, dtype)
        else:
            raise ShapeError(f"residual block maps {shape} to {out}; only channel counts may change")
        return L.ResidualLayer(block, projection), out
    raise TypeError(f"unknown layer spec {spec!r}")


def infer_shapes(spec: ModelSpec) -> list[tuple]:
    """Per-layer output shapes; raises ShapeError if the layers do not compose."""
    shapes, shape = [], tuple(spec.input_shape)
    rng = np.random.default_rng(0)
    for sub in spec.layers:
        _, shape = _build_layer(sub, shape, rng, np.float32)
        shapes.append(shape)
    return shapes


class Model:
    """A built network: an ordered list of layers with manual backprop.

    ``check_finite`` turns on the verification-mode check that every layer's
    forward and backward output is finite.
    """

    def __init__(self, spec: ModelSpec, seed: int = 0, dtype=np.float32, check_finite=False):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.check_finite = check_finite
        rng = np.random.Generator(np.random.Philox(seed))
        self.layers: list[L.Layer] = []
        shape = tuple(spec.input_shape)
        for sub in spec.layers:
            layer, shape = _build_layer(sub, shape, rng, self.dtype)
            self.layers.append(layer)
        if spec.num_classes is not None and spec.layers and shape != (spec.num_classes,):
            raise ShapeError(f"model output {shape} does not match {spec.num_classes} classes")
        self.output_shape = shape

    def named_params(self) -> list[tuple[str, L.Param]]:
        out = []
        for i, layer in enumerate(self.layers):
            for name, p in layer.params.items():
                out.append((f"{i}.{name}", p))
        return out

    def params(self) -> list[L.Param]:
        return [p for _, p in self.named_params()]

    def activation_layers(self) -> list[L.ActivationLayer]:
        found = []

        def walk(layers):
            for layer in layers:
                if isinstance(layer, L.ActivationLayer):
                    found.append(layer)
                elif isinstance(layer, L.ResidualLayer):
                    walk(layer.sublayers())
        walk(self.layers)
        return found

    def zero_grad(self):
        for p in self.params():
            p.grad[...] = 0

    def _check(self, arr, where):
        if self.check_finite and not np.all(np.isfinite(arr)):
            raise FloatingPointError(f"non-finite values after {where}")

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=self.dtype)
        for i, layer in enumerate(self.layers):
            x = layer.forward(x, training)
            self._check(x, f"layer {i} forward ({type(layer).__name__})")
        return x

    def backward(self, d_logits):
        g = np.asarray(d_logits, dtype=self.dtype)
        for i in reversed(range(len(self.layers))):
            g = self.layers[i].backward(g)
            self._check(g, f"layer {i} backward ({type(self.layers[i]).__name__})")
        return g

    def project(self):
        for layer in self.activation_layers():
            layer.project()

    def state(self) -> dict[str, np.ndarray]:
        """Copy of every learnable array and every running statistic."""
        out = {name: p.value.copy() for name, p in self.named_params()}

        def walk(layers, prefix):
            for i, layer in enumerate(layers):
                if isinstance(layer, L.BatchNormLayer):
                    out[f"{prefix}{i}.running_mean"] = layer.running_mean.copy()
                    out[f"{prefix}{i}.running_var"] = layer.running_var.copy()
                elif isinstance(layer, L.ResidualLayer):
                    walk(list(layer.sublayers()), f"{prefix}{i}.")
        walk(self.layers, "")
        return out


def model_forward(model: Model, x, mode="eval"):
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    return model.forward(x, training=mode == "train")


def model_backward(model: Model, d_logits) -> dict[str, np.ndarray]:
    """Backpropagate ``d_logits``; return ``{param name: gradient}`` plus ``"input"``."""
    model.zero_grad()
    d_input = model.backward(d_logits)
    grads = {name: p.grad.copy() for name, p in model.named_params()}
    grads["input"] = d_input
    return grads


def count_parameters(model: Model | ModelSpec) -> tuple[int, int]:
    """(total learnable scalars, of which activation parameters)."""
    if isinstance(model, ModelSpec):
        model = Model(model)
    params = model.params()
    return sum(p.size for p in params), sum(p.size for p in params if p.activation)


def activation_channels(model: Model | ModelSpec) -> int:
    """Total parameter sites over every activation layer, learnable or not."""
    if isinstance(model, ModelSpec):
        model = Model(model)
    total = 0
    for layer in model.activation_layers():
        total += int(np.prod(layer.site_shape))
    return total


def with_activation(spec: ModelSpec, kind: act.ActivationKind, granularity: str | None = None) -> ModelSpec:
    """Twin of ``spec`` with every activation layer swapped for ``kind``."""

    def swap(layers):
        out = []
        for layer in layers:
            if isinstance(layer, Activation):
                layer = Activation(kind, granularity or layer.granularity)
            elif isinstance(layer, Residual):
                layer = Residual(tuple(swap(layer.block)))
            out.append(layer)
        return out
    return replace(spec, layers=tuple(swap(spec.layers)))


# -- desk-scale presets --------------------------------------------------------

def mlp(input_dim=2, hidden=(32, 32), num_classes=2, kind=None, granularity="channel") -> ModelSpec:
    kind = kind or act.ReLU()
    layers, width = [], input_dim
    for h in hidden:
        layers += [Dense(width, h), Activation(kind, granularity)]
        width = h
    layers.append(Dense(width, num_classes))
    return ModelSpec(tuple(layers), num_classes, (input_dim,))


def mini_cnn(num_classes=10, kind=None, granularity="channel", widths=(16, 32, 64), input_shape=(3, 32, 32)) -> ModelSpec:
    """Three conv-BN-activation-pool stages followed by one dense classifier."""
    kind = kind or act.ReLU()
    layers, ch = [], input_shape[0]
    h, w = input_shape[1:]
    for out in widths:
        layers += [Conv2D(ch, out, 3, 1, 1, bias=False), BatchNorm(out),
                   Activation(kind, granularity), MaxPool(2, 2)]
        ch, h, w = out, h // 2, w // 2
    layers += [Flatten(), Dense(ch * h * w, num_classes)]
    return ModelSpec(tuple(layers), num_classes, tuple(input_shape))


def mini_resnet(num_classes=10, kind=None, granularity="channel", widths=(16, 32, 64), input_shape=(3, 32, 32)) -> ModelSpec:
    """Stem conv plus three residual stages of one basic block each.

    Stages are separated by 2x2 max pooling, so each block keeps its spatial
    size and only the channel count changes (via a 1x1 projection shortcut).
    """
    kind = kind or act.ReLU()
    stem = widths[0]
    layers = [Conv2D(input_shape[0], stem, 3, 1, 1, bias=False), BatchNorm(stem), Activation(kind, granularity)]
    ch = stem
    for i, out in enumerate(widths):
        block = (Conv2D(ch, out, 3, 1, 1, bias=False), BatchNorm(out), Activation(kind, granularity),
                 Conv2D(out, out, 3, 1, 1, bias=False), BatchNorm(out))
        layers += [Residual(block), Activation(kind, granularity)]
        if i < len(widths) - 1:
            layers.append(MaxPool(2, 2))
        ch = out
    layers += [GlobalAvgPool(), Dense(ch, num_classes)]
    return ModelSpec(tuple(layers), num_classes, tuple(input_shape))


def landscape_net(kind=None, width=16) -> ModelSpec:
    """2 -> 16 -> 16 -> 16 -> 1 scalar-output network."""
    kind = kind or act.ReLU()
    layers = [Dense(2, width), Activation(kind, "global"),
              Dense(width, width), Activation(kind, "global"),
              Dense(width, width), Activation(kind, "global"),
              Dense(width, 1)]
    return ModelSpec(tuple(layers), 1, (2,))


PRESETS = {
    "mlp": mlp,
    "mini-cnn": mini_cnn,
    "mini-resnet": mini_resnet,
}


def preset(name: str, kind=None, granularity="channel", num_classes=10, input_shape=None) -> ModelSpec:
    if name not in PRESETS:
        raise ValueError(f"unknown model preset {name!r}; choose from {sorted(PRESETS)}")
    if name == "mlp":
        dim = int(np.prod(input_shape)) if input_shape else 2
        spec = mlp(dim, num_classes=num_classes, kind=kind, granularity=granularity)
        if input_shape and len(input_shape) > 1:
            spec = replace(spec, layers=(Flatten(),) + spec.layers, input_shape=tuple(input_shape))
        return spec
    kwargs = {"input_shape": tuple(input_shape)} if input_shape else {}
    return PRESETS[name](num_classes=num_classes, kind=kind, granularity=granularity, **kwargs)
