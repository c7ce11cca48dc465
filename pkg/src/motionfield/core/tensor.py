"""Dense tensors with define-by-run reverse-mode differentiation.

Every primitive records a node holding its parents and a backward rule. A
Tape is the topologically ordered list of those nodes reachable from a scalar
loss; replaying it in reverse accumulates gradients into the requires_grad
leaves. Only first-order derivatives are supported: objectives that need
spatial derivatives build them from analytical expressions made of the same
primitives.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, TypeAlias

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import expit

from motionfield.errors import ContractError, DimensionError, DomainError

logger = logging.getLogger(__name__)

Array: TypeAlias = NDArray[np.float64]
Axes: TypeAlias = int | tuple[int, ...] | None
BackwardFn: TypeAlias = Callable[[Array], tuple[Array | None, ...]]
Operand: TypeAlias = "Tensor | ArrayLike"


@dataclass(slots=True)
class _Mode:
    grad_enabled: bool = True
    checked: bool = False


_MODE = _Mode()


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable recording for the enclosed block."""
    previous = _MODE.grad_enabled
    _MODE.grad_enabled = False
    try:
        yield
    finally:
        _MODE.grad_enabled = previous


@contextmanager
def checked(enabled: bool = True) -> Iterator[None]:
    """Enable NaN/Inf and domain detection for the enclosed block."""
    previous = _MODE.checked
    _MODE.checked = enabled
    try:
        yield
    finally:
        _MODE.checked = previous


def set_checked(enabled: bool) -> None:
    """Switch checked mode globally."""
    _MODE.checked = enabled


def is_checked() -> bool:
    return _MODE.checked


@dataclass(slots=True, eq=False)
class Node:
    """A recorded primitive: its name, inputs and backward rule."""

    op: str
    parents: tuple[Tensor, ...]
    backward: BackwardFn


class Tensor:
    """A float64 array that can take part in reverse-mode differentiation.

    Tensors are treated as immutable; only the optimizer writes to the data
    buffer of a leaf in place.
    """

    __slots__ = ("_node", "data", "grad", "requires_grad")
    __array_priority__ = 1000.0

    def __init__(self, data: ArrayLike, requires_grad: bool = False) -> None:
        self.data: Array = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Array | None = None
        self._node: Node | None = None

    @classmethod
    def _wrap(cls, data: Array) -> Tensor:
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = False
        out.grad = None
        out._node = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    @property
    def T(self) -> Tensor:
        return self.transpose()

    def numpy(self) -> Array:
        """Return the underlying buffer (do not mutate)."""
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> Tensor:
        return Tensor._wrap(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return int(self.data.shape[0])

    # Arithmetic

    def __add__(self, other: Operand) -> Tensor:
        return add(self, other)

    def __radd__(self, other: Operand) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Operand) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: Operand) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Operand) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: Operand) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other: Operand) -> Tensor:
        return div(self, other)

    def __rtruediv__(self, other: Operand) -> Tensor:
        return div(other, self)

    def __neg__(self) -> Tensor:
        return neg(self)

    def __matmul__(self, other: Operand) -> Tensor:
        return matmul(self, other)

    def __rmatmul__(self, other: Operand) -> Tensor:
        return matmul(other, self)

    def __getitem__(self, index: Any) -> Tensor:
        return getitem(self, index)

    # Method forms

    def sum(self, axis: Axes = None, keepdims: bool = False) -> Tensor:
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis: Axes = None, keepdims: bool = False) -> Tensor:
        return reduce_mean(self, axis, keepdims)

    def reshape(self, *shape: int) -> Tensor:
        return reshape(self, shape)

    def transpose(self, *axes: int) -> Tensor:
        return transpose(self, axes or None)

    def sin(self) -> Tensor:
        return sin(self)

    def cos(self) -> Tensor:
        return cos(self)

    def sqrt(self) -> Tensor:
        return sqrt(self)

    def square(self) -> Tensor:
        return square(self)

    def abs(self) -> Tensor:
        return absolute(self)


def as_tensor(value: Operand) -> Tensor:
    """Wrap array-likes as constant tensors; tensors pass through."""
    if isinstance(value, Tensor):
        return value
    return Tensor._wrap(np.asarray(value, dtype=np.float64))


def constant(value: ArrayLike) -> Tensor:
    return Tensor._wrap(np.array(value, dtype=np.float64))


def parameter(value: ArrayLike) -> Tensor:
    return Tensor(value, requires_grad=True)


def _record(op: str, data: Array, parents: tuple[Tensor, ...], rule: BackwardFn) -> Tensor:
    if _MODE.checked and not np.all(np.isfinite(data)):
        raise DomainError(f"{op} produced non-finite values")
    out = Tensor._wrap(data)
    if _MODE.grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._node = Node(op, parents, rule)
    return out


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_check(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from exc


# Binary element-wise primitives


def add(a: Operand, b: Operand) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    _broadcast_check("add", ta, tb)

    def rule(g: Array) -> tuple[Array | None, ...]:
        return _unbroadcast(g, ta.shape), _unbroadcast(g, tb.shape)

    return _record("add", ta.data + tb.data, (ta, tb), rule)


def sub(a: Operand, b: Operand) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", ta, tb)

    def rule(g: Array) -> tuple[Array | None, ...]:
        return _unbroadcast(g, ta.shape), _unbroadcast(-g, tb.shape)

    return _record("sub", ta.data - tb.data, (ta, tb), rule)


def mul(a: Operand, b: Operand) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", ta, tb)

    def rule(g: Array) -> tuple[Array | None, ...]:
        ga = _unbroadcast(g * tb.data, ta.shape) if ta.requires_grad else None
        gb = _unbroadcast(g * ta.data, tb.shape) if tb.requires_grad else None
        return ga, gb

    return _record("mul", ta.data * tb.data, (ta, tb), rule)


def div(a: Operand, b: Operand) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    _broadcast_check("div", ta, tb)
    out = ta.data / tb.data

    def rule(g: Array) -> tuple[Array | None, ...]:
        ga = _unbroadcast(g / tb.data, ta.shape) if ta.requires_grad else None
        gb = _unbroadcast(-g * out / tb.data, tb.shape) if tb.requires_grad else None
        return ga, gb

    return _record("div", out, (ta, tb), rule)


def matmul(a: Operand, b: Operand) -> Tensor:
    """Matrix product over the last two axes, batched over leading axes."""
    ta, tb = as_tensor(a), as_tensor(b)
    if ta.ndim < 2 or tb.ndim < 2:
        raise DimensionError(f"matmul needs matrices, got {ta.shape} and {tb.shape}")
    if ta.shape[-1] != tb.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {ta.shape} @ {tb.shape}")
    try:
        np.broadcast_shapes(ta.shape[:-2], tb.shape[:-2])
    except ValueError as exc:
        raise DimensionError(f"matmul batch shapes {ta.shape} and {tb.shape} differ") from exc

    def rule(g: Array) -> tuple[Array | None, ...]:
        ga = gb = None
        if ta.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(tb.data, -1, -2)), ta.shape)
        if tb.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(ta.data, -1, -2), g), tb.shape)
        return ga, gb

    return _record("matmul", np.matmul(ta.data, tb.data), (ta, tb), rule)


# Unary element-wise primitives


def _unary(op: str, x: Operand, value: Array, slope: Callable[[], Array]) -> Tensor:
    tx = as_tensor(x)

    def rule(g: Array) -> tuple[Array | None, ...]:
        return (g * slope(),)

    return _record(op, value, (tx,), rule)


def neg(x: Operand) -> Tensor:
    tx = as_tensor(x)
    return _record("neg", -tx.data, (tx,), lambda g: (-g,))


def sin(x: Operand) -> Tensor:
    tx = as_tensor(x)
    return _unary("sin", tx, np.sin(tx.data), lambda: np.cos(tx.data))


def cos(x: Operand) -> Tensor:
    tx = as_tensor(x)
    return _unary("cos", tx, np.cos(tx.data), lambda: -np.sin(tx.data))


def sqrt(x: Operand) -> Tensor:
    tx = as_tensor(x)
    if _MODE.checked and np.any(tx.data < 0.0):
        raise DomainError("sqrt of a negative value")
    out = np.sqrt(tx.data)
    return _unary("sqrt", tx, out, lambda: 0.5 / out)


def square(x: Operand) -> Tensor:
    tx = as_tensor(x)
    return _unary("square", tx, tx.data * tx.data, lambda: 2.0 * tx.data)


def absolute(x: Operand) -> Tensor:
    tx = as_tensor(x)
    return _unary("abs", tx, np.abs(tx.data), lambda: np.sign(tx.data))


def softplus(x: Operand) -> Tensor:
    """ln(1 + e^x) with the logistic function as derivative."""
    tx = as_tensor(x)
    return _unary("softplus", tx, np.logaddexp(0.0, tx.data), lambda: expit(tx.data))


def sigmoid(x: Operand) -> Tensor:
    tx = as_tensor(x)
    out = expit(tx.data)
    return _unary("sigmoid", tx, out, lambda: out * (1.0 - out))


def exp(x: Operand) -> Tensor:
    tx = as_tensor(x)
    out = np.exp(tx.data)
    return _unary("exp", tx, out, lambda: out)


def relu(x: Operand) -> Tensor:
    tx = as_tensor(x)
    return _unary("relu", tx, np.maximum(tx.data, 0.0), lambda: (tx.data > 0.0).astype(np.float64))


_ELEMENTWISE: dict[str, Callable[..., Tensor]] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "sin": sin,
    "cos": cos,
    "sqrt": sqrt,
    "softplus": softplus,
    "square": square,
    "abs": absolute,
    "exp": exp,
    "relu": relu,
    "sigmoid": sigmoid,
    "neg": neg,
}


def elementwise(op: str, *operands: Operand) -> Tensor:
    """Dispatch an element-wise primitive by name."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"Unknown element-wise op: {op}") from None
    return fn(*operands)


# Reductions


def _normalize_axes(axis: Axes, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    raw = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = []
    for a in raw:
        if not -ndim <= a < ndim:
            raise DimensionError(f"axis {a} out of range for {ndim}-d tensor")
        axes.append(a % ndim)
    if len(set(axes)) != len(axes):
        raise DimensionError(f"repeated axis in {raw}")
    return tuple(sorted(axes))


def reduce_sum(x: Operand, axis: Axes = None, keepdims: bool = False) -> Tensor:
    tx = as_tensor(x)
    axes = _normalize_axes(axis, tx.ndim)
    out = tx.data.sum(axis=axes, keepdims=keepdims)

    def rule(g: Array) -> tuple[Array | None, ...]:
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, tx.shape).copy(),)

    return _record("sum", np.asarray(out, dtype=np.float64), (tx,), rule)


def reduce_mean(x: Operand, axis: Axes = None, keepdims: bool = False) -> Tensor:
    tx = as_tensor(x)
    axes = _normalize_axes(axis, tx.ndim)
    count = int(np.prod([tx.shape[a] for a in axes])) if axes else 1
    return reduce_sum(tx, axes, keepdims) / float(max(count, 1))


def reduce(op: str, x: Operand, axis: Axes = None, keepdims: bool = False) -> Tensor:
    if op == "sum":
        return reduce_sum(x, axis, keepdims)
    if op == "mean":
        return reduce_mean(x, axis, keepdims)
    raise ContractError(f"Unknown reduction: {op}")


# Shape manipulation


def reshape(x: Operand, shape: Sequence[int]) -> Tensor:
    tx = as_tensor(x)
    try:
        out = tx.data.reshape(tuple(shape))
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {tx.shape} to {tuple(shape)}") from exc
    return _record("reshape", out, (tx,), lambda g: (g.reshape(tx.shape),))


def transpose(x: Operand, axes: Sequence[int] | None = None) -> Tensor:
    tx = as_tensor(x)
    perm = tuple(reversed(range(tx.ndim))) if axes is None else tuple(axes)
    if sorted(perm) != list(range(tx.ndim)):
        raise DimensionError(f"invalid permutation {perm} for shape {tx.shape}")
    inverse = tuple(int(i) for i in np.argsort(perm))
    out = np.transpose(tx.data, perm)
    return _record("transpose", out, (tx,), lambda g: (np.transpose(g, inverse),))


def _is_basic_index(index: Any) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, int | slice) or i is None or i is Ellipsis for i in items)


def getitem(x: Operand, index: Any) -> Tensor:
    """Index with numpy semantics; repeated advanced indices accumulate."""
    tx = as_tensor(x)
    try:
        out = np.asarray(tx.data[index], dtype=np.float64)
    except IndexError as exc:
        raise DimensionError(f"bad index for shape {tx.shape}: {exc}") from exc
    basic = _is_basic_index(index)

    def rule(g: Array) -> tuple[Array | None, ...]:
        full = np.zeros(tx.shape)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _record("getitem", out, (tx,), rule)


def concat(tensors: Sequence[Operand], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ContractError("concat needs at least one tensor")
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {exc}") from exc
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def rule(g: Array) -> tuple[Array | None, ...]:
        return tuple(np.split(g, bounds, axis=axis))

    return _record("concat", out, tuple(parts), rule)


def stack(tensors: Sequence[Operand], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ContractError("stack needs at least one tensor")
    try:
        out = np.stack([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"stack: {exc}") from exc

    def rule(g: Array) -> tuple[Array | None, ...]:
        return tuple(np.moveaxis(g, axis, 0))

    return _record("stack", out, tuple(parts), rule)


# Common compositions


def dot(a: Operand, b: Operand, axis: int = -1, keepdims: bool = False) -> Tensor:
    return reduce_sum(mul(a, b), axis, keepdims)


def norm(x: Operand, axis: int = -1, keepdims: bool = False, eps: float = 0.0) -> Tensor:
    """Euclidean norm along one axis; eps is added under the root."""
    sq = reduce_sum(square(x), axis, keepdims)
    return sqrt(sq + eps) if eps else sqrt(sq)


def cross(a: Operand, b: Operand) -> Tensor:
    """Cross product of 3-vectors along the last axis."""
    ta, tb = as_tensor(a), as_tensor(b)
    a0, a1, a2 = ta[..., 0], ta[..., 1], ta[..., 2]
    b0, b1, b2 = tb[..., 0], tb[..., 1], tb[..., 2]
    return stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


# The tape


class Tape:
    """Topologically ordered record of the nodes that produced a root tensor.

    Replaying in reverse order visits every node after all of its consumers, so
    each gradient is complete before it is propagated further.
    """

    def __init__(self, root: Tensor, entries: list[Tensor]) -> None:
        self.root = root
        self._entries = entries

    @classmethod
    def record(cls, root: Tensor) -> Tape:
        order: list[Tensor] = []
        visited: set[int] = set()
        pending: list[tuple[Tensor, bool]] = [(root, False)]
        while pending:
            tensor, expanded = pending.pop()
            if expanded:
                order.append(tensor)
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            pending.append((tensor, True))
            if tensor._node is not None:
                for parent in reversed(tensor._node.parents):
                    if parent.requires_grad and id(parent) not in visited:
                        pending.append((parent, False))
        return cls(root, order)

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def ops(self) -> list[str]:
        return [t._node.op for t in self._entries if t._node is not None]

    def backward(self) -> None:
        """Accumulate d(root)/d(leaf) into every requires_grad leaf."""
        root = self.root
        if root.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {root.shape}")
        if not root.requires_grad:
            raise ContractError("loss is not connected to any tensor that requires grad")
        grads: dict[int, Array] = {id(root): np.ones(root.shape)}
        for tensor in reversed(self._entries):
            g = grads.pop(id(tensor), None)
            if g is None:
                continue
            node = tensor._node
            if node is None:
                tensor.grad = g.copy() if tensor.grad is None else tensor.grad + g
                continue
            for parent, pg in zip(node.parents, node.backward(g), strict=True):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg

    def clear(self) -> None:
        """Drop every recorded node so intermediate buffers can be freed."""
        for tensor in self._entries:
            tensor._node = None
        self._entries = []


def backward(loss: Tensor) -> None:
    """Populate .grad of every requires_grad leaf with d(loss)/d(leaf)."""
    Tape.record(loss).backward()


def zero_grad(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None
