"""Tensor type and the reverse-mode tape.

Every differentiable operation returns a new :class:`Tensor` that remembers its
parents and a closure mapping the output gradient to one gradient per parent.
Nothing is ever modified in place on the tape, so a graph can be traversed any
number of times; :meth:`Tensor.backward` called twice without
:meth:`Tensor.zero_grad` therefore doubles the accumulated gradients.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

from ..errors import InvalidArgumentError

_state = threading.local()


def _get(name, default):
    return getattr(_state, name, default)


def default_dtype():
    """Float type new tensors are created with (float32 unless overridden)."""
    return _get("dtype", np.float32)


def set_default_dtype(dtype):
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise InvalidArgumentError(f"unsupported dtype {dtype}")
    _state.dtype = dtype.type


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the default dtype, e.g. ``precision(np.float64)`` for gradient checks."""
    old = default_dtype()
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = old


def grad_enabled():
    return _get("grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Run operations without recording them on the tape."""
    old = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = old


def debug_enabled():
    return _get("debug", False)


def set_debug(flag=True):
    """In debug mode every primitive checks its output for NaN/Inf."""
    _state.debug = bool(flag)


class Tensor:
    """Dense float array with optional gradient tracking.

    ``requires_grad`` marks a leaf whose ``grad`` is filled by
    :meth:`backward`. Intermediate results keep their gradient only if
    :meth:`retain_grad` was called on them.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op", "_retain", "name")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        dtype = dtype or default_dtype()
        self.data = np.array(data, dtype=dtype, copy=True)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._op = "leaf"
        self._retain = False
        self.name = name

    @classmethod
    def _result(cls, data, parents, backward, op):
        """Wrap an op output, recording it on the tape when any parent tracks gradients."""
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._retain = False
        out.name = None
        out._op = op
        tracked = grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = tracked
        out._parents = tuple(parents) if tracked else ()
        out._backward = backward if tracked else None
        if debug_enabled() and not np.all(np.isfinite(data)):
            raise FloatingPointError(f"non-finite output from {op}")
        return out

    # -- basic properties -------------------------------------------------
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

    @property
    def is_leaf(self):
        return self._backward is None

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        """Same values, cut from the tape."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        out._parents = ()
        out._backward = None
        out._op = "detach"
        out._retain = False
        out.name = None
        return out

    def retain_grad(self):
        self._retain = True
        return self

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}{flag})"

    def __len__(self):
        return self.shape[0]

    # -- reverse pass -----------------------------------------------------
    def _topo_order(self):
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        return order

    def backward(self):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every reachable tracked leaf."""
        if self.data.size != 1:
            raise InvalidArgumentError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(self._topo_order()):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None or node._retain:
                node.grad = g.copy() if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar (implemented in functional) -----------------------
    def __add__(self, other):
        return F.add(self, other)

    def __radd__(self, other):
        return F.add(other, self)

    def __sub__(self, other):
        return F.sub(self, other)

    def __rsub__(self, other):
        return F.sub(other, self)

    def __mul__(self, other):
        return F.mul(self, other)

    def __rmul__(self, other):
        return F.mul(other, self)

    def __truediv__(self, other):
        return F.div(self, other)

    def __rtruediv__(self, other):
        return F.div(other, self)

    def __neg__(self):
        return F.neg(self)

    def __pow__(self, exponent):
        return F.power(self, exponent)

    def __getitem__(self, index):
        return F.getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)


def as_tensor(value, dtype=None):
    """Return ``value`` unchanged if it is a Tensor, else wrap it as a constant."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


from . import functional as F  # noqa: E402  (circular: functional builds Tensors)
