# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Differentiable operations behind the layer kinds.

Each function computes its forward value with numpy (or the numba kernels for
convolution and pooling) and registers the matching backward closure.
"""
import numpy as np

from multifix.errors import DimensionError
from multifix.nncore import kernels
from multifix.nncore.tensor import Tensor


def relu(x):
    mask = x.data > 0
    return Tensor.result(np.where(mask, x.data, 0).astype(x.dtype), (x,), "relu",
                         lambda g: x.accumulate(g * mask))


def sigmoid(x):
    out = np.empty_like(x.data)
    positive = x.data >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x.data[positive]))
    expx = np.exp(x.data[~positive])
    out[~positive] = expx / (1.0 + expx)
    return Tensor.result(out, (x,), "sigmoid", lambda g: x.accumulate(g * out * (1.0 - out)))


def softmax(x, axis=-1):
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        x.accumulate(out * (g - (g * out).sum(axis=axis, keepdims=True)))
    return Tensor.result(out, (x,), "softmax", backward)


def conv2d(x, weight, bias, stride=1, padding=0):
    """
    Direct 2-d convolution of an NCHW tensor.

    Parameters
    ----------
    x: Tensor
        Shape (N, C, H, W).
    weight: Tensor
        Shape (F, C, k, k).
    bias: Tensor
        Shape (F,).
    stride: int
    padding: int
        Zero padding added on every side.
    """
    if x.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise DimensionError(f"conv2d expects (N, {weight.shape[1]}, H, W), got {x.shape}")
    k = weight.shape[2]
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = (xp.shape[2] - k) // stride + 1
    ow = (xp.shape[3] - k) // stride + 1
    if oh < 1 or ow < 1:
        raise DimensionError(f"conv2d kernel {k} does not fit input {x.shape}")
    out = np.zeros((x.shape[0], weight.shape[0], oh, ow), dtype=x.dtype)
    w = weight.data.astype(x.dtype, copy=False)
    kernels.conv2d_forward(xp, w, bias.data.astype(x.dtype, copy=False), stride, out)

    def backward(g):
        g = np.ascontiguousarray(g, dtype=x.dtype)
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w)
        gb = np.zeros(weight.shape[0], dtype=x.dtype)
        kernels.conv2d_backward(xp, w, g, stride, gxp, gw, gb)
        h, wd = x.shape[2], x.shape[3]
        x.accumulate(gxp[:, :, padding:padding + h, padding:padding + wd])
        weight.accumulate(gw)
        bias.accumulate(gb)
    return Tensor.result(out, (x, weight, bias), "conv2d", backward)


def max_pool2d(x, size=2):
    if x.ndim != 4:
        raise DimensionError(f"max_pool2d expects an NCHW tensor, got {x.shape}")
    n, c, h, w = x.shape
    if h < size or w < size:
        raise DimensionError(f"max_pool2d window {size} larger than input {x.shape}")
    src = np.ascontiguousarray(x.data)
    out = np.empty((n, c, h // size, w // size), dtype=x.dtype)
    arg = np.empty(out.shape + (2,), dtype=np.int64)
    kernels.maxpool2d_forward(src, size, out, arg)

    def backward(g):
        gx = np.zeros(x.shape, dtype=x.dtype)
        kernels.maxpool2d_backward(np.ascontiguousarray(g, dtype=x.dtype), arg, gx)
        x.accumulate(gx)
    return Tensor.result(out, (x,), "maxpool2d", backward)


def dropout(x, rate, rng, train):
    """Inverted dropout; the identity outside training."""
    if not train or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return Tensor.result(x.data * keep, (x,), "dropout", lambda g: x.accumulate(g * keep))


def batch_norm(x, gamma, beta, running_mean, running_var, train, momentum=0.1, eps=1e-5):
    """
    Batch normalisation over every axis except the channel axis 1.

    ``running_mean`` and ``running_var`` are updated in place, only when
    ``train`` is set.
    """
    axes = (0,) if x.ndim == 2 else (0, 2, 3)
    view = (1, -1) if x.ndim == 2 else (1, -1, 1, 1)
    if x.shape[1] != gamma.shape[0]:
        raise DimensionError(f"batchnorm expects {gamma.shape[0]} channels, got {x.shape}")
    if train:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        count = x.data.size // x.shape[1]
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * count / max(count - 1, 1)
    else:
        mu, var = running_mean, running_var
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mu.reshape(view)) * inv_std.reshape(view)
    out = gamma.data.reshape(view) * xhat + beta.data.reshape(view)

    def backward(g):
        gamma.accumulate((g * xhat).sum(axis=axes))
        beta.accumulate(g.sum(axis=axes))
        dxhat = g * gamma.data.reshape(view)
        if train:
            m = x.data.size // x.shape[1]
            dx = (m * dxhat - dxhat.sum(axis=axes, keepdims=True)
                  - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True))
            x.accumulate(dx * inv_std.reshape(view) / m)
        else:
            x.accumulate(dxhat * inv_std.reshape(view))
    return Tensor.result(out.astype(x.dtype), (x, gamma, beta), "batchnorm", backward)


def upsample_nearest(x, size):
    """Nearest-neighbour resize of an NCHW tensor to ``size`` = (H', W')."""
    h, w = x.shape[2], x.shape[3]
    rows = (np.arange(size[0]) * h) // size[0]
    cols = (np.arange(size[1]) * w) // size[1]
    out = x.data[:, :, rows][:, :, :, cols]

    def backward(g):
        gx = np.zeros(x.shape, dtype=x.dtype)
        np.add.at(gx, (slice(None), slice(None), rows[:, None], cols[None, :]), g)
        x.accumulate(gx)
    return Tensor.result(out, (x,), "upsample2d", backward)
