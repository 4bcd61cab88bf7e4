# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Tensors with a reverse-mode gradient tape.

Every operation that touches a tensor with ``requires_grad`` set creates a new
tensor that remembers its parents and a closure propagating the incoming
gradient to them. :py:meth:`Tensor.backward` walks that graph in reverse
topological order.
"""
import contextlib

import numpy as np

from multifix.errors import GradientError, DimensionError


@contextlib.contextmanager
def no_grad():
    """Context manager in which no operation is recorded on the tape."""
    previous = Tensor.grad_enabled
    Tensor.grad_enabled = False
    try:
        yield
    finally:
        Tensor.grad_enabled = previous


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def as_tensor(value, dtype=None):
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


class Tensor:
    """
    N-dimensional array that can take part in the gradient tape.

    Attributes
    ----------
    data: numpy.ndarray
        Values, 32-bit floats unless another float dtype is requested.
    requires_grad: bool
    grad: numpy.ndarray or None
        Same shape as ``data`` once a backward pass has reached the tensor.
    """

    grad_enabled = True

    def __init__(self, data, requires_grad=False, dtype=None, _parents=(), _op=""):
        if dtype is None:
            dtype = data.dtype if isinstance(data, np.ndarray) and data.dtype in (
                np.float32, np.float64) else np.float32
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._op = _op
        self._backward = None
        self._consumed = False

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op or 'leaf'}, " \
               f"requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __len__(self):
        return len(self.data)

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data.copy(), dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    @staticmethod
    def result(data, parents, op, backward):
        """
        Create the output of an operation and hook it into the tape.

        Parameters
        ----------
        data: numpy.ndarray
        parents: tuple of Tensor
        op: str
            Name of the operation, kept for debugging.
        backward: callable
            Receives the gradient of the output and accumulates into parents.
        """
        track = Tensor.grad_enabled and any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=track, dtype=data.dtype,
                     _parents=parents if track else (), _op=op)
        if track:
            out._backward = backward
        return out

    def accumulate(self, grad):
        if not self.requires_grad:
            return
        grad = _unbroadcast(np.asarray(grad), self.data.shape).astype(self.data.dtype, copy=False)
        if grad.shape != self.data.shape:
            grad = np.broadcast_to(grad, self.data.shape)
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    def backward(self, grad=None, inputs=()):
        """
        Populate ``grad`` of every tensor on the tape that leads to this one.

        Leaves that get no gradient, and every tensor in ``inputs`` that has
        ``requires_grad`` set but is not on the tape, end with a zero
        gradient rather than ``None``.

        Raises
        ------
        GradientError
            If the tape was already consumed, or the tensor is not tracked, or
            no seed gradient is given for a non-scalar tensor.
        """
        if self._consumed:
            raise GradientError("backward called twice on the same tape")
        if not self.requires_grad:
            raise GradientError("tensor is not part of a gradient tape")
        if grad is None:
            if self.data.size != 1:
                raise GradientError(f"backward needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)

        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        self.accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in list(order) + list(inputs):
            if node.requires_grad and not node._parents and node.grad is None:
                node.grad = np.zeros_like(node.data)
        for node in order:
            if node._parents:
                node._consumed = True
                node._backward = None
                node._parents = ()
        self._consumed = True

    # -- arithmetic -------------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other, self.dtype)

        def backward(g):
            self.accumulate(g)
            other.accumulate(g)
        return Tensor.result(self.data + other.data, (self, other), "add", backward)

    __radd__ = __add__

    def __neg__(self):
        return Tensor.result(-self.data, (self,), "neg", lambda g: self.accumulate(-g))

    def __sub__(self, other):
        return self + (-as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return as_tensor(other, self.dtype) + (-self)

    def __mul__(self, other):
        other = as_tensor(other, self.dtype)

        def backward(g):
            self.accumulate(g * other.data)
            other.accumulate(g * self.data)
        return Tensor.result(self.data * other.data, (self, other), "mul", backward)

    __rmul__ = __mul__

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")

        def backward(g):
            self.accumulate(g * exponent * self.data ** (exponent - 1))
        return Tensor.result(self.data ** exponent, (self,), "pow", backward)

    def __matmul__(self, other):
        other = as_tensor(other, self.dtype)
        if self.shape[-1] != other.shape[0]:
            raise DimensionError(f"matmul of {self.shape} and {other.shape}")

        def backward(g):
            self.accumulate(g @ other.data.T)
            other.accumulate(self.data.T @ g)
        return Tensor.result(self.data @ other.data, (self, other), "matmul", backward)

    def __getitem__(self, index):
        def backward(g):
            full = np.zeros_like(self.data)
            np.add.at(full, index, g)
            self.accumulate(full)
        return Tensor.result(self.data[index], (self,), "index", backward)

    # -- reductions and reshaping ----------------------------------------------

    def sum(self, axis=None, keepdims=False):
        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self.accumulate(np.broadcast_to(g, self.shape))
        return Tensor.result(np.asarray(self.data.sum(axis=axis, keepdims=keepdims)),
                             (self,), "sum", backward)

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else np.prod(
            [self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Tensor.result(self.data.reshape(shape), (self,), "reshape",
                             lambda g: self.accumulate(g.reshape(self.shape)))


def concat(tensors, axis=-1):
    """Concatenate tensors along ``axis``, splitting the gradient back."""
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    edges = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, part in zip(tensors, np.split(g, edges, axis=axis)):
            t.accumulate(part)
    return Tensor.result(np.concatenate([t.data for t in tensors], axis=axis),
                         tuple(tensors), "concat", backward)
