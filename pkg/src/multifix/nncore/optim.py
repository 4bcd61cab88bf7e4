# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Adam with decoupled weight decay.
"""
import numpy as np

from multifix.errors import ConfigurationError, GradientError


class AdamState:
    """
    Moment buffers and step counters of one optimiser.

    ``step`` counts calls to :py:func:`adam_step`; ``steps`` counts the
    updates each parameter has received, which drives its bias correction.
    A parameter unfrozen late starts its correction from its first update.

    Parameters
    ----------
    learning_rate: float
        Non-negative; a zero rate leaves parameters untouched.
    weight_decay: float
        Non-negative, applied directly to the parameters.
    """

    def __init__(self, learning_rate=1e-3, weight_decay=0.0, beta1=0.9, beta2=0.999,
                 epsilon=1e-8):
        if learning_rate < 0:
            raise ConfigurationError(f"learning_rate must be >= 0, got {learning_rate}")
        if weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be >= 0, got {weight_decay}")
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.first = {}
        self.second = {}
        self.step = 0
        self.steps = {}

    def __repr__(self):
        return f"AdamState(lr={self.learning_rate}, wd={self.weight_decay}, step={self.step})"


def adam_step(state, params):
    """
    Apply one Adam update and clear the gradients.

    Parameters
    ----------
    state: AdamState
    params: dict
        Parameter name to :py:class:`~multifix.nncore.tensor.Tensor`. Tensors
        with ``requires_grad`` unset are left bit-identical.

    Raises
    ------
    GradientError
        If any gradient holds a non-finite value; no parameter is changed then.
    """
    trainable = {name: p for name, p in params.items() if p.requires_grad}
    for name, p in trainable.items():
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise GradientError(f"non-finite gradient in parameter {name}")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    for name, p in trainable.items():
        t = state.steps.get(name, 0) + 1
        state.steps[name] = t
        correction1 = 1.0 - b1 ** t
        correction2 = 1.0 - b2 ** t
        grad = np.zeros(p.shape) if p.grad is None else p.grad.astype(np.float64)
        if name not in state.first:
            state.first[name] = np.zeros(p.shape)
            state.second[name] = np.zeros(p.shape)
        m = state.first[name]
        v = state.second[name]
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * grad * grad
        value = p.data.astype(np.float64)
        value -= state.learning_rate * state.weight_decay * value
        value -= state.learning_rate * (m / correction1) / (np.sqrt(v / correction2)
                                                            + state.epsilon)
        p.data[...] = value
        p.grad = None
