"""Forward/backward kernels for the layer library.

Every ``*_forward`` returns ``(output, ctx)`` and the matching ``*_backward``
takes that ``ctx`` plus the upstream gradient.  Arrays are numpy; 4-D tensors
are N x C x H x W.  Kernels are dtype-preserving so the same code serves 32-bit
training and 64-bit gradient checking.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    pass


def dense_forward(x, weights, bias=None):
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ShapeError(f"dense: input {x.shape} does not compose with weights {weights.shape}")
    if bias is not None and bias.shape != (weights.shape[1],):
        raise ShapeError(f"dense: bias {bias.shape} does not match {weights.shape[1]} outputs")
    y = x @ weights
    if bias is not None:
        y = y + bias
    return y, (x, weights, bias is not None)


def dense_backward(ctx, upstream):
    x, weights, has_bias = ctx
    if upstream.shape != (x.shape[0], weights.shape[1]):
        raise ShapeError(f"dense: upstream {upstream.shape} does not match output shape")
    d_input = upstream @ weights.T
    d_weights = x.T @ upstream
    d_bias = upstream.sum(axis=0) if has_bias else None
    return d_input, d_weights, d_bias


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    span = size + 2 * pad - kernel
    if span < 0 or span % stride:
        raise ShapeError(f"conv: (size {size} + 2*{pad} - {kernel}) not divisible by stride {stride}")
    return span // stride + 1


def _windows(xp, k, stride, ho, wo):
    # (N, C, Ho, Wo, k, k) view, no copy
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    return win[:, :, ::stride, ::stride][:, :, :ho, :wo]


def conv2d_forward(x, kernels, bias=None, stride=1, pad=0):
    """Cross-correlation (no kernel flip) via im2col and one matrix product."""
    if x.ndim != 4 or kernels.ndim != 4 or kernels.shape[1] != x.shape[1]:
        raise ShapeError(f"conv: input {x.shape} does not compose with kernels {kernels.shape}")
    n, c, h, w = x.shape
    o, _, k, k2 = kernels.shape
    if k != k2:
        raise ShapeError("conv: only square kernels are supported")
    ho = conv_output_size(h, k, stride, pad)
    wo = conv_output_size(w, k, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _windows(xp, k, stride, ho, wo).transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    y = cols @ kernels.reshape(o, -1).T
    if bias is not None:
        y += bias
    y = y.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(y), (cols, x.shape, kernels, stride, pad, bias is not None)


def conv2d_backward(ctx, upstream):
    cols, in_shape, kernels, stride, pad, has_bias = ctx
    n, c, h, w = in_shape
    o, _, k, _ = kernels.shape
    ho, wo = upstream.shape[2:]
    if upstream.shape != (n, o, ho, wo) or cols.shape[0] != n * ho * wo:
        raise ShapeError(f"conv: upstream {upstream.shape} does not match output shape")
    dy = upstream.transpose(0, 2, 3, 1).reshape(-1, o)
    d_kernels = (dy.T @ cols).reshape(kernels.shape)
    d_bias = dy.sum(axis=0) if has_bias else None
    dcols = (dy @ kernels.reshape(o, -1)).reshape(n, ho, wo, c, k, k)
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=upstream.dtype)
    # col2im: fixed loop order keeps accumulation deterministic
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    d_input = dxp[:, :, pad:pad + h, pad:pad + w] if pad else dxp
    return np.ascontiguousarray(d_input), d_kernels, d_bias


def _bn_axes(x):
    if x.ndim == 2:
        return (0,), (1, -1)
    if x.ndim == 4:
        return (0, 2, 3), (1, -1, 1, 1)
    raise ShapeError(f"batchnorm: expected 2-D or 4-D input, got {x.ndim}-D")


def batchnorm_forward(x, gamma, beta_shift, running_mean, running_var,
                      eps=1e-5, momentum=0.1, training=True):
    """Batch normalization over every axis except the channel axis (1).

    In training mode the running statistics are updated in place with
    ``running = (1 - momentum) * running + momentum * batch`` (unbiased batch
    variance for the running estimate, biased for normalization).
    """
    axes, bshape = _bn_axes(x)
    count = x.size // x.shape[1]
    if training:
        if x.shape[0] < 2:
            raise ValueError(f"batchnorm: training mode needs batch size >= 2, got {x.shape[0]}")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var * (count / (count - 1))
    else:
        mean, var = running_mean, running_var
    inv_std = 1 / np.sqrt(var + eps)
    x_hat = (x - mean.reshape(bshape)) * inv_std.reshape(bshape)
    y = gamma.reshape(bshape) * x_hat + beta_shift.reshape(bshape)
    return y, (x_hat, inv_std, gamma, training)


def batchnorm_backward(ctx, upstream):
    x_hat, inv_std, gamma, training = ctx
    axes, bshape = _bn_axes(x_hat)
    d_gamma = (upstream * x_hat).sum(axis=axes)
    d_beta = upstream.sum(axis=axes)
    g = upstream * gamma.reshape(bshape)
    if training:
        m = x_hat.size // x_hat.shape[1]
        d_input = (inv_std.reshape(bshape) / m) * (
            m * g - g.sum(axis=axes).reshape(bshape)
            - x_hat * (g * x_hat).sum(axis=axes).reshape(bshape))
    else:
        d_input = g * inv_std.reshape(bshape)
    return d_input, d_gamma, d_beta


def maxpool_forward(x, k=2, stride=2):
    n, c, h, w = x.shape
    ho = conv_output_size(h, k, stride, 0)
    wo = conv_output_size(w, k, stride, 0)
    win = _windows(x, k, stride, ho, wo).reshape(n, c, ho, wo, k * k)
    arg = win.argmax(axis=-1)          # first maximum wins ties
    y = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return y, (arg, x.shape, k, stride)


def maxpool_backward(ctx, upstream):
    arg, in_shape, k, stride = ctx
    ho, wo = arg.shape[2:]
    dx = np.zeros(in_shape, dtype=upstream.dtype)
    for i in range(k):
        for j in range(k):
            hit = arg == i * k + j
            dx[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += np.where(hit, upstream, 0)
    return dx


def global_avgpool_forward(x):
    return x.mean(axis=(2, 3)), x.shape


def global_avgpool_backward(ctx, upstream):
    n, c, h, w = ctx
    return np.broadcast_to(upstream[:, :, None, None] / (h * w), ctx).copy()


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. the logits.

    Uses max-subtraction so saturated logits stay finite.
    """
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    rows = np.arange(n)
    loss = -log_p[rows, labels].mean()
    grad = np.exp(log_p)
    grad[rows, labels] -= 1
    grad /= n
    return float(loss), grad
