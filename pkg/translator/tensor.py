"""
Tensor Autodiff
Dense numpy-backed tensors with reverse-mode automatic differentiation.

Every op records a GraphNode holding its inputs and a closure that maps the
upstream gradient to one gradient per input. ``Tensor.backward`` walks the
graph in reverse topological order and accumulates into ``.grad`` of the leaf
tensors that require gradients. Gradients accumulate until ``zero_grad``.
"""

import contextlib
import contextvars
import logging
import os
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ContractError, NumericalError, ShapeError

logger = logging.getLogger(__name__)

ArrayLike = Union["Tensor", np.ndarray, float, int]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_default_dtype = contextvars.ContextVar("default_dtype", default=np.dtype(np.float32))
_grad_enabled = contextvars.ContextVar("grad_enabled", default=True)
_debug_checks = contextvars.ContextVar(
    "debug_checks", default=os.environ.get("R1_DEBUG", "0") not in ("", "0", "false", "False")
)

# Ops whose output may legitimately hold -inf (explicit fill values).
_NONFINITE_OK = frozenset({"masked_fill"})


def get_default_dtype() -> np.dtype:
    """Floating dtype used for new tensors built from non-float data."""
    return _default_dtype.get()


@contextlib.contextmanager
def default_dtype(dtype) -> Iterator[None]:
    """Temporarily switch the default floating dtype (e.g. float64 for grad checks)."""
    token = _default_dtype.set(np.dtype(dtype))
    try:
        yield
    finally:
        _default_dtype.reset(token)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


def is_debug_enabled() -> bool:
    return _debug_checks.get()


@contextlib.contextmanager
def debug_mode(enabled: bool = True) -> Iterator[None]:
    """Scan every forward result for NaN/Inf inside the block."""
    token = _debug_checks.set(enabled)
    try:
        yield
    finally:
        _debug_checks.reset(token)


@dataclass
class GraphNode:
    """Backward-graph record of one op."""

    op: str
    inputs: Tuple["Tensor", ...]
    backward: BackwardFn


class Tensor:
    """
    Dense row-major array with an optional gradient buffer.

    Args:
        data: Array-like values. Float arrays keep their dtype; everything
            else is converted to the current default dtype.
        requires_grad: Whether backward should fill ``.grad`` for this leaf.
        dtype: Explicit dtype override.
        name: Optional label used in error messages.
    """

    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: Optional[str] = None):
        if dtype is None:
            if isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
                dtype = data.dtype
            else:
                dtype = get_default_dtype()
        self.data = np.ascontiguousarray(np.asarray(data, dtype=dtype))
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._node: Optional[GraphNode] = None

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
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def node(self) -> Optional[GraphNode]:
        return self._node

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), dtype=self.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    def backward(self) -> None:
        """
        Accumulate dLoss/dLeaf into ``.grad`` of every reachable leaf.

        Raises:
            ContractError: if this tensor is not a scalar or carries no graph.
        """
        if self.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("loss is not connected to any tensor that requires grad")

        grads = {id(self): np.ones_like(self.data)}
        for t in reversed(_topological_order(self)):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            if t._node is None:
                t.grad = g.copy() if t.grad is None else t.grad + g
                continue
            for inp, ig in zip(t._node.inputs, t._node.backward(g)):
                if ig is None or not inp.requires_grad:
                    continue
                ig = np.asarray(ig, dtype=inp.dtype)
                if ig.shape != inp.shape:
                    ig = _unbroadcast(ig, inp.shape)
                prev = grads.get(id(inp))
                grads[id(inp)] = ig if prev is None else prev + ig

    # operator sugar
    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        return div(self, other)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, key) -> "Tensor":
        return index(self, key)


def _topological_order(root: Tensor) -> list:
    """Post-order over the tensors that require grad (inputs before outputs)."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in visited:
            continue
        visited.add(id(t))
        stack.append((t, True))
        if t._node is not None:
            for inp in t._node.inputs:
                if inp.requires_grad and id(inp) not in visited:
                    stack.append((inp, False))
    return order


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def as_tensor(value: ArrayLike, like: Optional[Tensor] = None) -> Tensor:
    """Wrap constants as non-differentiable tensors in the dtype of ``like``."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value), dtype=dtype or get_default_dtype())


def make_op(
    data: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn, op: str = "custom"
) -> Tensor:
    """
    Build the output tensor of an op and record its graph node.

    Args:
        data: Forward result.
        inputs: Tensors the result depends on.
        backward: Maps the upstream gradient to one gradient per input
            (``None`` for inputs that need none).
        op: Op tag stored in the graph node.

    Returns:
        Output tensor (graph-connected only if grad is enabled and some input
        requires grad).
    """
    out = Tensor(data, dtype=data.dtype)
    if _grad_enabled.get() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._node = GraphNode(op, tuple(inputs), backward)
    if _debug_checks.get() and op not in _NONFINITE_OK and not np.all(np.isfinite(data)):
        raise NumericalError(f"op '{op}' produced NaN/Inf values")
    return out


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# Elementwise
# ---------------------------------------------------------------------------


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a, b, "add")
    return make_op(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a, b, "sub")
    return make_op(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a, b, "mul")
    return make_op(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a, b, "div")

    def backward(g):
        return g / b.data, -g * a.data / (b.data * b.data)

    return make_op(a.data / b.data, (a, b), backward, "div")


def neg(a: Tensor) -> Tensor:
    return make_op(-a.data, (a,), lambda g: (-g,), "neg")


def relu(x: Tensor) -> Tensor:
    gate = x.data > 0
    return make_op(np.where(gate, x.data, 0).astype(x.dtype), (x,), lambda g: (g * gate,), "relu")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return make_op(y, (x,), lambda g: (g * (1 - y * y),), "tanh")


def sigmoid(x: Tensor) -> Tensor:
    # tanh form avoids overflow in exp for large |x|
    y = (0.5 * (1 + np.tanh(0.5 * x.data))).astype(x.dtype)
    return make_op(y, (x,), lambda g: (g * y * (1 - y),), "sigmoid")


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return make_op(y, (x,), lambda g: (g * y,), "exp")


def log(x: Tensor) -> Tensor:
    return make_op(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


_ELEMENTWISE = {
    "relu": (1, relu),
    "tanh": (1, tanh),
    "sigmoid": (1, sigmoid),
    "add": (2, add),
    "mul": (2, mul),
}


def elementwise(op: str, *inputs: ArrayLike) -> Tensor:
    """
    Apply a named pointwise op.

    Args:
        op: One of ``relu``, ``tanh``, ``sigmoid``, ``add``, ``mul``.
        inputs: One tensor for unary ops, two for binary ops.
    """
    if op not in _ELEMENTWISE:
        raise ContractError(
            f"unknown elementwise op '{op}'; expected one of {sorted(_ELEMENTWISE)}"
        )
    arity, fn = _ELEMENTWISE[op]
    if len(inputs) != arity:
        raise ContractError(f"elementwise '{op}' takes {arity} input(s), got {len(inputs)}")
    return fn(*inputs)


def _pair(a: ArrayLike, b: ArrayLike) -> Tuple[Tensor, Tensor]:
    like = a if isinstance(a, Tensor) else b if isinstance(b, Tensor) else None
    return as_tensor(a, like), as_tensor(b, like)


# ---------------------------------------------------------------------------
# Linear algebra and shape ops
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product over the last two axes (leading axes broadcast).

    Raises:
        ShapeError: if the inner dimensions differ (both shapes in the message).
    """
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        if b.ndim == 2 and g.ndim > 2:
            # fold leading axes instead of materialising a broadcast batch
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return ga, gb

    return make_op(np.matmul(a.data, b.data), (a, b), backward, "matmul")


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    if axes is None:
        axes = tuple(range(x.ndim))[::-1]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_op(
        np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),), "transpose"
    )


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from None
    return make_op(data, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def index(x: Tensor, key) -> Tensor:
    parts = key if isinstance(key, tuple) else (key,)
    basic = all(isinstance(k, (int, np.integer, slice)) for k in parts)

    def backward(g):
        grad = np.zeros_like(x.data)
        if basic:
            grad[key] += g
        else:
            np.add.at(grad, key, g)
        return (grad,)

    return make_op(np.ascontiguousarray(x.data[key]), (x,), backward, "index")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_op(data, tuple(tensors), backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    try:
        data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"stack: incompatible shapes {[t.shape for t in tensors]}") from None

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return make_op(data, tuple(tensors), backward, "stack")


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    data = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_op(np.asarray(data, dtype=x.dtype), (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return sum(x, axis=axis, keepdims=keepdims) * (1.0 / count)


# ---------------------------------------------------------------------------
# Softmax family and masking
# ---------------------------------------------------------------------------


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable log-softmax (max subtraction)."""
    if x.ndim == 0 or x.shape[axis] < 1:
        raise ContractError(f"log_softmax: axis {axis} is empty for shape {x.shape}")
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    y = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(y) * np.sum(g, axis=axis, keepdims=True),)

    return make_op(y, (x,), backward, "log_softmax")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return make_op(y, (x,), backward, "softmax")


def masked_fill(x: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where ``mask`` is True with ``value``; no gradient flows there."""
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    data = np.where(mask, np.asarray(value, dtype=x.dtype), x.data)
    return make_op(data, (x,), lambda g: (np.where(mask, 0, g).astype(g.dtype),), "masked_fill")


def take_last(x: Tensor, ids: np.ndarray) -> Tensor:
    """Pick ``x[..., ids[...]]`` along the last axis (one value per leading position)."""
    ids = np.asarray(ids)
    if ids.shape != x.shape[:-1]:
        raise ShapeError(f"take_last: ids shape {ids.shape} does not match {x.shape[:-1]}")
    expanded = ids[..., None]
    data = np.take_along_axis(x.data, expanded, axis=-1)[..., 0]

    def backward(g):
        grad = np.zeros_like(x.data)
        np.put_along_axis(grad, expanded, g[..., None], axis=-1)
        return (grad,)

    return make_op(data, (x,), backward, "take_last")


# ---------------------------------------------------------------------------
# Verification harness
# ---------------------------------------------------------------------------


def grad_check(
    f: Callable[[], Tensor],
    params,
    eps: float = 1e-6,
    seed: int = 0,
    max_checks: Optional[int] = None,
    floor: float = 1e-4,
) -> float:
    """
    Compare analytic gradients with central finite differences.

    Args:
        f: Zero-argument function recomputing the scalar loss from ``params``.
        params: ParameterStore (only trainable entries are checked), a mapping
            name -> Tensor, or a sequence of tensors.
        eps: Finite-difference step.
        seed: Seeds the choice of checked elements when ``max_checks`` is set.
        max_checks: Optional cap on checked elements per tensor.
        floor: Lower bound of the relative-error denominator.

    Returns:
        Worst relative error ``|a - n| / max(|a|, |n|, floor)``; 0.0 when there
        is nothing to check.
    """
    tensors = _named_tensors(params)
    if not tensors:
        return 0.0
    if any(t.dtype != np.float64 for _, t in tensors):
        logger.warning("grad_check running below float64; expect looser agreement")

    for _, t in tensors:
        t.zero_grad()
    f().backward()
    analytic = {name: (t.grad if t.grad is not None else np.zeros_like(t.data)).reshape(-1).copy()
                for name, t in tensors}

    rng = np.random.default_rng(seed)
    worst = 0.0
    with no_grad():
        for name, t in tensors:
            flat = t.data.reshape(-1)
            positions = np.arange(flat.size)
            if max_checks is not None and flat.size > max_checks:
                positions = np.sort(rng.choice(flat.size, size=max_checks, replace=False))
            for i in positions:
                original = flat[i]
                flat[i] = original + eps
                plus = f().item()
                flat[i] = original - eps
                minus = f().item()
                flat[i] = original
                numeric = (plus - minus) / (2 * eps)
                a = float(analytic[name][i])
                err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
                if err > worst:
                    worst = err
                    logger.debug(f"grad_check {name}[{i}]: analytic={a:.6e} numeric={numeric:.6e}")
    return worst


def _named_tensors(params) -> list:
    if hasattr(params, "trainable_items"):
        return list(params.trainable_items())
    if isinstance(params, Mapping):
        return list(params.items())
    return [(f"param{i}", t) for i, t in enumerate(params)]
