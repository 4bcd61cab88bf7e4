# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Scalar training objectives.

All three losses average over every element and return a tracked scalar
:py:class:`~multifix.nncore.tensor.Tensor`.
"""
import numpy as np

from multifix.errors import DataError, DimensionError
from multifix.nncore.tensor import Tensor, as_tensor


def cross_entropy(logits, labels):
    """
    Mean negative log softmax probability of the true class.

    Parameters
    ----------
    logits: Tensor
        Shape (batch, C) with C >= 2.
    labels: array_like of int
        Class indices in ``[0, C)``.

    Raises
    ------
    DimensionError
        If logits are not 2-d, C < 2 or the batch sizes differ.
    DataError
        If a label is out of range.
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise DimensionError(f"cross_entropy needs logits of shape (batch, C>=2), "
                             f"got {logits.shape}")
    if labels.shape[0] != logits.shape[0]:
        raise DimensionError(f"{labels.shape[0]} labels for {logits.shape[0]} rows")
    n, c = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise DataError(f"labels must be in [0, {c}), got range "
                        f"[{labels.min()}, {labels.max()}]")
    x = logits.data.astype(np.float64)
    shifted = x - x.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    rows = np.arange(n)
    value = -log_p[rows, labels].mean()

    def backward(g):
        grad = np.exp(log_p)
        grad[rows, labels] -= 1.0
        logits.accumulate(grad * (float(g) / n))
    return Tensor.result(np.asarray(value, dtype=logits.dtype), (logits,), "cross_entropy",
                         backward)


def mse_loss(pred, target):
    """Mean squared difference between ``pred`` and ``target`` of equal shape."""
    target = as_tensor(target, pred.dtype)
    if pred.shape != target.shape:
        raise DimensionError(f"mse_loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred.data.astype(np.float64) - target.data
    value = (diff ** 2).mean()

    def backward(g):
        pred.accumulate(2.0 * diff * (float(g) / diff.size))
        target.accumulate(-2.0 * diff * (float(g) / diff.size))
    return Tensor.result(np.asarray(value, dtype=pred.dtype), (pred, target), "mse", backward)


def bce_with_logits(logits, targets):
    """
    Mean binary cross entropy of sigmoid(logits) against targets in [0, 1].

    Computed as ``max(x, 0) - x t + log(1 + exp(-|x|))``, finite for any x.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if logits.shape != targets.shape:
        raise DimensionError(f"bce_with_logits shapes differ: {logits.shape} vs {targets.shape}")
    x = logits.data.astype(np.float64)
    value = (np.maximum(x, 0) - x * targets + np.log1p(np.exp(-np.abs(x)))).mean()

    def backward(g):
        prob = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        logits.accumulate((prob - targets) * (float(g) / x.size))
    return Tensor.result(np.asarray(value, dtype=logits.dtype), (logits,), "bce", backward)
