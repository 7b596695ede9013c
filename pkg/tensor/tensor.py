"""
Tensor - dense float arrays with reverse-mode automatic differentiation.

The graph is recorded dynamically while operations run and released after
backward(). Every primitive registers a closure mapping the output gradient to
one gradient per parent; the engine walks the graph once in reverse
topological order and sums contributions.

Broadcasting follows numpy's trailing-dimension rules. Gradients of broadcast
operands are summed back to the operand shape.
"""

import threading
from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import ShapeError, UsageError


DEFAULT_DTYPE = np.float64

_state = threading.local()


def is_grad_enabled() -> bool:
    """Whether operations in the current thread record a graph."""
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Run operations without recording a graph (inference, benchmarks)."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class AllocationCounter:
    """Counts floats allocated by tensor operations inside a tracking block."""

    def __init__(self):
        self.floats = 0
        self.largest = 0

    def record(self, count: int):
        self.floats += int(count)
        self.largest = max(self.largest, int(count))


@contextmanager
def track_allocations() -> Iterator[AllocationCounter]:
    previous = getattr(_state, "counter", None)
    counter = AllocationCounter()
    _state.counter = counter
    try:
        yield counter
    finally:
        _state.counter = previous


def record_allocation(count: int):
    counter = getattr(_state, "counter", None)
    if counter is not None:
        counter.record(count)


def broadcast_shape(a: Tuple[int, ...], b: Tuple[int, ...]) -> Tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a, b))
    except ValueError as exc:
        raise ShapeError(f"shapes {a} and {b} are not broadcastable") from exc


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def _expand_reduced(grad: np.ndarray, shape: Tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if not keepdims:
        grad = np.expand_dims(grad, normalize_axes(axis, len(shape)))
    return np.broadcast_to(grad, shape)


Operand = Union["Tensor", np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    """
    Dense float array with an optional gradient accumulator.

    Attributes:
        data: Underlying numpy array (float64 unless created as float32)
        requires_grad: Whether gradients are tracked for this tensor
        grad: Accumulated gradient, same shape as data, allocated on first use
    """

    __array_priority__ = 1000

    def __init__(
        self,
        data: Operand,
        requires_grad: bool = False,
        dtype=None,
        name: Optional[str] = None,
    ):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            is_float = isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating)
            dtype = data.dtype if is_float else DEFAULT_DTYPE
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.op = "leaf"
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None

    # ------------------------------------------------------------------
    # Construction helpers

    @staticmethod
    def result(data: np.ndarray, parents: Tuple["Tensor", ...], backward: BackwardFn, op: str) -> "Tensor":
        """Wrap an op output and attach it to the graph when needed."""
        out = Tensor(np.asarray(data))
        record_allocation(out.data.size)
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out.op = op
            out._parents = parents
            out._backward = backward
        return out

    def lift(self, other: Operand) -> "Tensor":
        """Turn a constant operand into a tensor with this tensor's dtype."""
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    # ------------------------------------------------------------------
    # Array protocol

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # ------------------------------------------------------------------
    # Backward engine

    def backward(self):
        """
        Accumulate d(self)/d(leaf) into every reachable requires_grad tensor.

        The root must hold a single element. Calling backward on a fresh graph
        again without zero_grad() adds to the existing gradients. The graph
        below the root is released afterwards.
        """
        if self.data.size != 1:
            raise UsageError(f"backward() needs a scalar root, got shape {self.shape}")
        if not self.requires_grad:
            return

        order = self._topological_order()
        pending = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            node._accumulate(grad)
            if node._backward is None:
                continue
            for parent, parent_grad in zip(node._parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pending[key] + parent_grad if key in pending else parent_grad

        for node in order:
            if node._backward is not None:
                node._parents = ()
                node._backward = None

    def _accumulate(self, grad: np.ndarray):
        grad = np.asarray(grad, dtype=self.data.dtype)
        if grad.shape != self.shape:
            grad = np.broadcast_to(grad, self.shape)
        self.grad = np.array(grad) if self.grad is None else self.grad + grad

    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
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
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return order

    # ------------------------------------------------------------------
    # Binary arithmetic

    def __add__(self, other: Operand) -> "Tensor":
        other = self.lift(other)
        broadcast_shape(self.shape, other.shape)
        a_shape, b_shape = self.shape, other.shape

        def backward(g):
            return unbroadcast(g, a_shape), unbroadcast(g, b_shape)

        return Tensor.result(self.data + other.data, (self, other), backward, "add")

    def __radd__(self, other: Operand) -> "Tensor":
        return self.lift(other) + self

    def __sub__(self, other: Operand) -> "Tensor":
        other = self.lift(other)
        broadcast_shape(self.shape, other.shape)
        a_shape, b_shape = self.shape, other.shape

        def backward(g):
            return unbroadcast(g, a_shape), unbroadcast(-g, b_shape)

        return Tensor.result(self.data - other.data, (self, other), backward, "sub")

    def __rsub__(self, other: Operand) -> "Tensor":
        return self.lift(other) - self

    def __mul__(self, other: Operand) -> "Tensor":
        other = self.lift(other)
        broadcast_shape(self.shape, other.shape)
        a, b = self.data, other.data

        def backward(g):
            return unbroadcast(g * b, a.shape), unbroadcast(g * a, b.shape)

        return Tensor.result(a * b, (self, other), backward, "mul")

    def __rmul__(self, other: Operand) -> "Tensor":
        return self.lift(other) * self

    def __truediv__(self, other: Operand) -> "Tensor":
        other = self.lift(other)
        broadcast_shape(self.shape, other.shape)
        a, b = self.data, other.data
        with np.errstate(divide="ignore", invalid="ignore"):
            out = a / b

        def backward(g):
            with np.errstate(divide="ignore", invalid="ignore"):
                return unbroadcast(g / b, a.shape), unbroadcast(-g * a / (b * b), b.shape)

        return Tensor.result(out, (self, other), backward, "div")

    def __rtruediv__(self, other: Operand) -> "Tensor":
        return self.lift(other) / self

    def __neg__(self) -> "Tensor":
        return Tensor.result(-self.data, (self,), lambda g: (-g,), "negate")

    def __pow__(self, exponent: float) -> "Tensor":
        if isinstance(exponent, Tensor):
            raise UsageError("only scalar exponents are supported")
        x = self.data
        p = float(exponent)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = x ** p

        def backward(g):
            with np.errstate(divide="ignore", invalid="ignore"):
                return (g * p * x ** (p - 1.0),)

        return Tensor.result(out, (self,), backward, "pow")

    def __matmul__(self, other: Operand) -> "Tensor":
        other = self.lift(other)
        a, b = self.data, other.data
        if a.ndim < 2 or b.ndim < 2:
            raise ShapeError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
        if a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
        broadcast_shape(a.shape[:-2], b.shape[:-2])

        def backward(g):
            grad_a = np.matmul(g, np.swapaxes(b, -1, -2))
            grad_b = np.matmul(np.swapaxes(a, -1, -2), g)
            return unbroadcast(grad_a, a.shape), unbroadcast(grad_b, b.shape)

        return Tensor.result(np.matmul(a, b), (self, other), backward, "matmul")

    def __rmatmul__(self, other: Operand) -> "Tensor":
        return self.lift(other) @ self

    # ------------------------------------------------------------------
    # Unary elementwise

    def exp(self) -> "Tensor":
        out = np.exp(self.data)
        return Tensor.result(out, (self,), lambda g: (g * out,), "exp")

    def log(self) -> "Tensor":
        x = self.data
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(x)

        def backward(g):
            with np.errstate(divide="ignore", invalid="ignore"):
                return (g / x,)

        return Tensor.result(out, (self,), backward, "log")

    def softplus(self) -> "Tensor":
        x = self.data
        out = np.logaddexp(0.0, x).astype(x.dtype, copy=False)
        return Tensor.result(out, (self,), lambda g: (g * _sigmoid(x),), "softplus")

    def sigmoid(self) -> "Tensor":
        out = _sigmoid(self.data)
        return Tensor.result(out, (self,), lambda g: (g * out * (1.0 - out),), "sigmoid")

    def tanh(self) -> "Tensor":
        out = np.tanh(self.data)
        return Tensor.result(out, (self,), lambda g: (g * (1.0 - out * out),), "tanh")

    def relu(self) -> "Tensor":
        mask = self.data > 0
        return Tensor.result(self.data * mask, (self,), lambda g: (g * mask,), "relu")

    def elu(self) -> "Tensor":
        x = self.data
        positive = x > 0
        out = np.where(positive, x, np.expm1(np.minimum(x, 0.0)))
        return Tensor.result(out, (self,), lambda g: (g * np.where(positive, 1.0, out + 1.0),), "elu")

    def sqrt(self) -> "Tensor":
        with np.errstate(invalid="ignore"):
            out = np.sqrt(self.data)

        def backward(g):
            with np.errstate(divide="ignore", invalid="ignore"):
                return (g * 0.5 / out,)

        return Tensor.result(out, (self,), backward, "sqrt")

    def abs(self) -> "Tensor":
        sign = np.sign(self.data)
        return Tensor.result(np.abs(self.data), (self,), lambda g: (g * sign,), "abs")

    def astype(self, dtype) -> "Tensor":
        source = self.data.dtype
        return Tensor.result(self.data.astype(dtype), (self,), lambda g: (g.astype(source),), "cast")

    # ------------------------------------------------------------------
    # Reductions

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        shape = self.shape
        out = self.data.sum(axis=axis, keepdims=keepdims)
        return Tensor.result(out, (self,), lambda g: (_expand_reduced(g, shape, axis, keepdims),), "sum")

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        shape = self.shape
        count = int(np.prod([shape[a] for a in normalize_axes(axis, len(shape))]))
        out = self.data.mean(axis=axis, keepdims=keepdims)
        return Tensor.result(out, (self,), lambda g: (_expand_reduced(g / count, shape, axis, keepdims),), "mean")

    def max(self, axis=None, keepdims: bool = False) -> "Tensor":
        x = self.data
        peak = x.max(axis=axis, keepdims=True)
        mask = (x == peak).astype(x.dtype)
        mask /= mask.sum(axis=axis, keepdims=True)
        out = peak if keepdims else np.squeeze(peak, axis=normalize_axes(axis, x.ndim))

        def backward(g):
            return (_expand_reduced(g, x.shape, axis, keepdims) * mask,)

        return Tensor.result(out, (self,), backward, "max")

    # ------------------------------------------------------------------
    # Shape manipulation

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        source = self.shape
        try:
            out = self.data.reshape(shape)
        except ValueError as exc:
            raise ShapeError(f"cannot reshape {source} to {shape}") from exc
        return Tensor.result(out, (self,), lambda g: (g.reshape(source),), "reshape")

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        out = np.transpose(self.data, axes)
        return Tensor.result(out, (self,), lambda g: (np.transpose(g, inverse),), "transpose")

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def swapaxes(self, first: int, second: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[first], axes[second] = axes[second], axes[first]
        return self.transpose(tuple(axes))

    def unsqueeze(self, axis: int) -> "Tensor":
        shape = list(self.shape)
        axis = axis % (self.ndim + 1)
        shape.insert(axis, 1)
        return self.reshape(tuple(shape))

    def flip(self, axis: int) -> "Tensor":
        index = [slice(None)] * self.ndim
        index[axis] = slice(None, None, -1)
        return self[tuple(index)]

    def __getitem__(self, index) -> "Tensor":
        if isinstance(index, Tensor):
            index = index.data
        source_shape, dtype = self.shape, self.data.dtype
        basic = _is_basic_index(index)
        out = self.data[index]

        def backward(g):
            grad = np.zeros(source_shape, dtype=dtype)
            if basic:
                grad[index] += g
            else:
                np.add.at(grad, index, g)
            return (grad,)

        return Tensor.result(np.array(out), (self,), backward, "slice")


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis or p is None for p in parts)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def as_tensor(value: Operand, dtype=None) -> Tensor:
    """Return `value` unchanged if it is a Tensor, else wrap it as a constant."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)
