"""Minimal reverse-mode autodiff on float64 numpy arrays.

Every differentiable operation in the package is built from the Tensor
primitives below, so one finite-difference harness can certify all of them.
Arrays are always float64; the graph is a plain DAG of closures replayed in
reverse topological order.
"""

from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference / FD probes)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if keep:
        grad = grad.sum(axis=keep, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A float64 array with an optional backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) and _GRAD_ENABLED
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    # -- introspection -----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- autograd ----------------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Backpropagate from a scalar tensor through the recorded graph."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out_data = self.data + other.data
        req = self.requires_grad or other.requires_grad
        if not (req and _GRAD_ENABLED):
            return Tensor(out_data)

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))

        return Tensor(out_data, True, (self, other), bw)

    __radd__ = __add__

    def __neg__(self):
        if not (self.requires_grad and _GRAD_ENABLED):
            return Tensor(-self.data)

        def bw(g):
            self._accumulate(-g)

        return Tensor(-self.data, True, (self,), bw)

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out_data = self.data * other.data
        req = self.requires_grad or other.requires_grad
        if not (req and _GRAD_ENABLED):
            return Tensor(out_data)

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        return Tensor(out_data, True, (self, other), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out_data = self.data / other.data
        req = self.requires_grad or other.requires_grad
        if not (req and _GRAD_ENABLED):
            return Tensor(out_data)

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape)
                )

        return Tensor(out_data, True, (self, other), bw)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __matmul__(self, other):
        other = as_tensor(other)
        out_data = self.data @ other.data
        req = self.requires_grad or other.requires_grad
        if not (req and _GRAD_ENABLED):
            return Tensor(out_data)

        def bw(g):
            if self.requires_grad:
                if other.data.ndim == 1:
                    self._accumulate(np.outer(g, other.data) if self.data.ndim == 2 else g * other.data)
                else:
                    self._accumulate(_unbroadcast(g @ np.swapaxes(other.data, -1, -2), self.data.shape))
            if other.requires_grad:
                if self.data.ndim == 1:
                    other._accumulate(np.outer(self.data, g) if other.data.ndim == 2 else self.data * g)
                else:
                    other._accumulate(_unbroadcast(np.swapaxes(self.data, -1, -2) @ g, other.data.shape))

        return Tensor(out_data, True, (self, other), bw)

    # -- shape ops ----------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out_data = self.data.reshape(shape)
        if not (self.requires_grad and _GRAD_ENABLED):
            return Tensor(out_data)

        def bw(g):
            self._accumulate(g.reshape(self.data.shape))

        return Tensor(out_data, True, (self,), bw)

    def transpose(self, axes=None):
        out_data = np.transpose(self.data, axes)
        if not (self.requires_grad and _GRAD_ENABLED):
            return Tensor(out_data)
        inv = None if axes is None else tuple(np.argsort(axes))

        def bw(g):
            self._accumulate(np.transpose(g, inv))

        return Tensor(out_data, True, (self,), bw)

    @property
    def T(self):
        return self.transpose()

    def __getitem__(self, idx):
        out_data = self.data[idx]
        if not (self.requires_grad and _GRAD_ENABLED):
            return Tensor(out_data)

        def bw(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            self._accumulate(full)

        return Tensor(out_data, True, (self,), bw)

    # -- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)
        if not (self.requires_grad and _GRAD_ENABLED):
            return Tensor(out_data)

        def bw(g):
            if axis is None:
                self._accumulate(np.broadcast_to(g, self.data.shape).copy())
                return
            gg = g
            if not keepdims:
                gg = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(gg, self.data.shape).copy())

        return Tensor(out_data, True, (self,), bw)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            n = self.data.size
        else:
            n = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(n)

    # -- pointwise nonlinearities ---------------------------------------------

    def exp(self):
        out_data = np.exp(self.data)
        if not (self.requires_grad and _GRAD_ENABLED):
            return Tensor(out_data)

        def bw(g):
            self._accumulate(g * out_data)

        return Tensor(out_data, True, (self,), bw)

    def log(self):
        out_data = np.log(self.data)
        if not (self.requires_grad and _GRAD_ENABLED):
            return Tensor(out_data)

        def bw(g):
            self._accumulate(g / self.data)

        return Tensor(out_data, True, (self,), bw)

    def sqrt(self):
        out_data = np.sqrt(self.data)
        if not (self.requires_grad and _GRAD_ENABLED):
            return Tensor(out_data)

        def bw(g):
            self._accumulate(g * 0.5 / out_data)

        return Tensor(out_data, True, (self,), bw)

    def tanh(self):
        out_data = np.tanh(self.data)
        if not (self.requires_grad and _GRAD_ENABLED):
            return Tensor(out_data)

        def bw(g):
            self._accumulate(g * (1.0 - out_data * out_data))

        return Tensor(out_data, True, (self,), bw)

    def sigmoid(self):
        # stable: exp of a non-positive argument on both branches
        x = self.data
        out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                            np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        if not (self.requires_grad and _GRAD_ENABLED):
            return Tensor(out_data)

        def bw(g):
            self._accumulate(g * out_data * (1.0 - out_data))

        return Tensor(out_data, True, (self,), bw)

    def relu(self):
        out_data = np.maximum(self.data, 0.0)
        if not (self.requires_grad and _GRAD_ENABLED):
            return Tensor(out_data)

        def bw(g):
            self._accumulate(g * (self.data > 0.0))

        return Tensor(out_data, True, (self,), bw)

    def clamp_min(self, lo: float):
        out_data = np.maximum(self.data, lo)
        if not (self.requires_grad and _GRAD_ENABLED):
            return Tensor(out_data)

        def bw(g):
            self._accumulate(g * (self.data >= lo))

        return Tensor(out_data, True, (self,), bw)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    """A leaf tensor that accumulates gradients."""
    t = Tensor(np.array(data, dtype=np.float64, copy=True))
    t.requires_grad = True
    return t


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    req = any(t.requires_grad for t in tensors)
    if not (req and _GRAD_ENABLED):
        return Tensor(out_data)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, a, b in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(a, b)
                t._accumulate(g[tuple(sl)])

    return Tensor(out_data, True, tuple(tensors), bw)


def softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Numerically stable softmax along ``axis``.

    ``mask`` is a 0/1 array broadcastable to ``x``; zero entries receive exactly
    zero probability and contribute nothing to the normalization. Raises on NaN
    input and on any slice that is fully masked.
    """
    x = as_tensor(x)
    z = x.data
    if np.isnan(z).any():
        raise ValueError("softmax: NaN in input")
    if mask is not None:
        mask = np.asarray(mask)
        if not ((mask == 0) | (mask == 1)).all():
            raise ValueError("softmax: mask entries must be 0 or 1")
        keep = np.broadcast_to(mask != 0, z.shape)
        if not keep.any(axis=axis).all():
            raise ValueError("softmax: fully masked slice")
        z = np.where(keep, z, -np.inf)
    m = np.max(z, axis=axis, keepdims=True)
    e = np.exp(z - m)
    s = e / e.sum(axis=axis, keepdims=True)
    if not (x.requires_grad and _GRAD_ENABLED):
        return Tensor(s)

    def bw(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        x._accumulate(s * (g - dot))

    return Tensor(s, True, (x,), bw)
