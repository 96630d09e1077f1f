"""Minimal dense-tensor network engine with manual backpropagation."""
from reca.nn.functional import ShapeError, softmax_cross_entropy
from reca.nn.layers import ActivationLayer, Param
from reca.nn.model import (
    Activation, BatchNorm, Conv2D, Dense, Flatten, GlobalAvgPool, MaxPool, Model, ModelSpec,
    Residual, activation_channels, count_parameters, model_backward, model_forward, preset,
    with_activation,
)

__all__ = [
    "Activation", "ActivationLayer", "BatchNorm", "Conv2D", "Dense", "Flatten", "GlobalAvgPool",
    "MaxPool", "Model", "ModelSpec", "Param", "Residual", "ShapeError", "activation_channels",
    "count_parameters", "model_backward", "model_forward", "preset", "softmax_cross_entropy",
    "with_activation",
]
