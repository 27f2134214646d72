"""Dense tensor with reverse-mode autodiff.

A ``Tensor`` wraps a numpy array.  Ops in :mod:`parconv.ops` build a graph
of closures as they run; :meth:`Tensor.backward` walks it in reverse
topological order and leaves ``.grad`` on every leaf that asked for one.

Storage is float32 for speed; pass float64 arrays (or ``dtype=np.float64``)
to get float64 end to end, which the gradient checks rely on.
"""
import threading
from contextlib import contextmanager

import numpy as np

from .errors import GraphError, NonFiniteError, ShapeError

_state = threading.local()


def _flag(name, default):
    return getattr(_state, name, default)


def is_checked():
    return _flag("checked", False)


@contextmanager
def checked(enabled=True):
    """Raise :class:`NonFiniteError` as soon as any op produces NaN or Inf."""
    prev = is_checked()
    _state.checked = enabled
    try:
        yield
    finally:
        _state.checked = prev


def grad_enabled():
    return _flag("grad", True)


@contextmanager
def no_grad():
    prev = grad_enabled()
    _state.grad = False
    try:
        yield
    finally:
        _state.grad = prev


class MacCounter:
    """Counts multiply-accumulates issued by forward convolution GEMMs."""

    def __init__(self):
        self.macs = 0
        self.by_op = {}

    def add(self, op, n):
        self.macs += n
        self.by_op[op] = self.by_op.get(op, 0) + n


@contextmanager
def count_macs():
    stack = _flag("counters", None)
    if stack is None:
        stack = _state.counters = []
    counter = MacCounter()
    stack.append(counter)
    try:
        yield counter
    finally:
        stack.remove(counter)


def record_macs(op, n):
    for counter in _flag("counters", ()):
        counter.add(op, n)


def check_finite(arr, where):
    if is_checked() and not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values produced by {where}")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op", "_freed")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._backward = None
        self._op = None
        self._freed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

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

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self):
        op = f", op={self._op}" if self._op else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{op})"

    def __add__(self, other):
        from .ops import add

        return add(self, other)

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every leaf's ``.grad``.

        The graph is released afterwards; a second call raises GraphError.
        """
        if self._freed:
            raise GraphError("graph already released by a previous backward()")
        if self._backward is None:
            if not self.requires_grad:
                raise GraphError("backward() called on a tensor with no recorded forward pass")
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.shape:
                raise ShapeError(f"seed gradient shape {grad.shape} != tensor shape {self.shape}")

        order = _topo_order(self)
        grads = {id(self): grad}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None:
                    continue
                check_finite(pg, f"backward of {node._op}")
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg
        for node in order:
            if node._backward is not None:
                node._backward = None
                node._parents = ()
                node._freed = True


def _topo_order(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    order.reverse()
    return order


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def make_result(data, parents, backward, op):
    """Wrap an op's output, recording the graph edge when any input needs grad."""
    check_finite(data, op)
    out = Tensor(data, dtype=data.dtype)
    out._op = op
    if grad_enabled() and any(p.requires_grad or p._backward is not None for p in parents):
        out._parents = tuple(parents)
        out._backward = backward
    return out
