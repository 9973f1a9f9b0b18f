"""Array-valued reverse-mode automatic differentiation on top of numpy.

Every operation returns a new Tensor that remembers its inputs and a closure
which pushes its output gradient back to them. `backward` walks the graph in
reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from milvse.utils.errors import ContractError, DegenerateRowError, DimensionError


class Tensor:
    """A dense array plus the bookkeeping needed to differentiate through it."""

    __slots__ = ("data", "grad", "requires_grad", "_children", "_backprop", "_op")
    # Makes `ndarray <op> Tensor` defer to our reflected operators
    __array_ufunc__ = None

    def __init__(
        self,
        data,
        children: tuple[Tensor, ...] = (),
        op: str = "",
        requires_grad: bool = False,
    ):
        array = np.asarray(data)
        if array.dtype.kind != "f":
            array = array.astype(np.float64)
        self.data: np.ndarray = array
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(c.requires_grad for c in children)
        self._children = children
        self._backprop: Callable[[], None] | None = None
        self._op = op

    # -- plumbing -------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.item())

    def numpy(self) -> np.ndarray:
        return self.data

    def _accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad += grad

    def _lift(self, other) -> Tensor:
        # Plain numbers adopt our dtype so float32 graphs stay float32
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self._op!r})"

    # -- elementwise arithmetic -----------------------------------------------

    def __add__(self, other) -> Tensor:
        other = self._lift(other)
        out = Tensor(self.data + other.data, (self, other), "+")

        def _backprop():
            self._accumulate(_unbroadcast(out.grad, self.shape))
            other._accumulate(_unbroadcast(out.grad, other.shape))

        out._backprop = _backprop
        return out

    def __mul__(self, other) -> Tensor:
        other = self._lift(other)
        out = Tensor(self.data * other.data, (self, other), "*")

        def _backprop():
            self._accumulate(_unbroadcast(out.grad * other.data, self.shape))
            other._accumulate(_unbroadcast(out.grad * self.data, other.shape))

        out._backprop = _backprop
        return out

    def __truediv__(self, other) -> Tensor:
        other = self._lift(other)
        out = Tensor(self.data / other.data, (self, other), "/")

        def _backprop():
            self._accumulate(_unbroadcast(out.grad / other.data, self.shape))
            other._accumulate(
                _unbroadcast(-out.grad * out.data / other.data, other.shape)
            )

        out._backprop = _backprop
        return out

    def __pow__(self, exponent: float) -> Tensor:
        if isinstance(exponent, Tensor):
            raise ContractError("Only constant exponents are supported.")
        out = Tensor(self.data**exponent, (self,), f"**{exponent}")

        def _backprop():
            self._accumulate(out.grad * exponent * self.data ** (exponent - 1))

        out._backprop = _backprop
        return out

    def __neg__(self) -> Tensor:
        return self * -1.0

    def __radd__(self, other) -> Tensor:
        return self + other

    def __sub__(self, other) -> Tensor:
        return self + (-self._lift(other))

    def __rsub__(self, other) -> Tensor:
        return self._lift(other) + (-self)

    def __rmul__(self, other) -> Tensor:
        return self * other

    def __rtruediv__(self, other) -> Tensor:
        return self._lift(other) / self

    def __matmul__(self, other) -> Tensor:
        return matmul(self, self._lift(other))

    def __getitem__(self, index) -> Tensor:
        out = Tensor(self.data[index], (self,), "[]")

        def _backprop():
            if not self.requires_grad:
                return
            if self.grad is None:
                self.grad = np.zeros_like(self.data)
            if _is_basic_index(index):
                self.grad[index] += out.grad
            else:
                np.add.at(self.grad, index, out.grad)

        out._backprop = _backprop
        return out

    # -- unary functions ------------------------------------------------------

    def tanh(self) -> Tensor:
        out = Tensor(np.tanh(self.data), (self,), "tanh")

        def _backprop():
            self._accumulate(out.grad * (1.0 - out.data * out.data))

        out._backprop = _backprop
        return out

    def sigmoid(self) -> Tensor:
        # tanh form avoids overflow in exp for large |x|
        out = Tensor(0.5 * (np.tanh(0.5 * self.data) + 1.0), (self,), "sigmoid")

        def _backprop():
            self._accumulate(out.grad * out.data * (1.0 - out.data))

        out._backprop = _backprop
        return out

    def sqrt(self) -> Tensor:
        out = Tensor(np.sqrt(self.data), (self,), "sqrt")

        def _backprop():
            self._accumulate(out.grad * 0.5 / out.data)

        out._backprop = _backprop
        return out

    def relu(self) -> Tensor:
        out = Tensor(np.maximum(self.data, 0.0), (self,), "relu")

        def _backprop():
            self._accumulate(out.grad * (self.data > 0))

        out._backprop = _backprop
        return out

    # -- shape manipulation ---------------------------------------------------

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        out = Tensor(np.sum(self.data, axis=axis, keepdims=keepdims), (self,), "sum")

        def _backprop():
            grad = out.grad
            if axis is not None and not keepdims:
                grad = np.expand_dims(grad, _normalize_axes(axis, self.ndim))
            self._accumulate(np.broadcast_to(grad, self.shape))

        out._backprop = _backprop
        return out

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor(self.data.reshape(shape), (self,), "reshape")

        def _backprop():
            self._accumulate(out.grad.reshape(self.shape))

        out._backprop = _backprop
        return out

    @property
    def mT(self) -> Tensor:
        """Swaps the two trailing axes (matrix transpose, batched)."""
        out = Tensor(np.swapaxes(self.data, -1, -2), (self,), "mT")

        def _backprop():
            self._accumulate(np.swapaxes(out.grad, -1, -2))

        out._backprop = _backprop
        return out

    @property
    def T(self) -> Tensor:
        if self.ndim == 1:
            return self
        return self.mT

    def max_trailing(self, ndims: int = 2) -> Tensor:
        """Maximum over the trailing `ndims` axes.

        The gradient goes to the first maximal entry in row-major order.
        """
        lead = self.shape[: self.ndim - ndims]
        flat = self.data.reshape(lead + (-1,))
        if flat.shape[-1] == 0:
            raise ContractError("Cannot take the maximum of an empty tensor.")
        index = np.argmax(flat, axis=-1)[..., None]
        out = Tensor(np.take_along_axis(flat, index, axis=-1)[..., 0], (self,), "max")

        def _backprop():
            grad = np.zeros_like(flat)
            np.put_along_axis(grad, index, out.grad[..., None], axis=-1)
            self._accumulate(grad.reshape(self.shape))

        out._backprop = _backprop
        return out


# -- free-standing primitives ---------------------------------------------------


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy broadcasting over leading (batch) axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise DimensionError(f"matmul needs arrays, got shapes {a.shape} and {b.shape}")
    inner_a = a.shape[-1]
    inner_b = b.shape[0] if b.ndim == 1 else b.shape[-2]
    if inner_a != inner_b:
        raise DimensionError(
            f"matmul shape mismatch: {a.shape} and {b.shape} (inner {inner_a} != {inner_b})"
        )
    out = Tensor(np.matmul(a.data, b.data), (a, b), "@")

    def _backprop():
        a2 = a.data[None, :] if a.ndim == 1 else a.data
        b2 = b.data[:, None] if b.ndim == 1 else b.data
        out_shape = np.broadcast_shapes(a2.shape[:-2], b2.shape[:-2]) + (
            a2.shape[-2],
            b2.shape[-1],
        )
        grad = out.grad.reshape(out_shape)
        if a.requires_grad:
            grad_a = _unbroadcast(np.matmul(grad, np.swapaxes(b2, -1, -2)), a2.shape)
            a._accumulate(grad_a.reshape(a.shape))
        if b.requires_grad:
            grad_b = _unbroadcast(np.matmul(np.swapaxes(a2, -1, -2), grad), b2.shape)
            b._accumulate(grad_b.reshape(b.shape))

    out._backprop = _backprop
    return out


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    out = Tensor(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), "stack")

    def _backprop():
        for i, tensor in enumerate(tensors):
            tensor._accumulate(np.take(out.grad, i, axis=axis))

    out._backprop = _backprop
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    out = Tensor(
        np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), "concat"
    )

    def _backprop():
        bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
        for tensor, grad in zip(tensors, np.split(out.grad, bounds, axis=axis)):
            tensor._accumulate(grad)

    out._backprop = _backprop
    return out


def row_softmax(m: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis; entries where `mask` is False are exactly 0."""
    m = as_tensor(m)
    if mask is None:
        logits = m.data
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), m.shape)
        if not mask.any(axis=-1).all():
            raise DegenerateRowError("row_softmax got a fully masked row.")
        logits = np.where(mask, m.data, -np.inf)
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    out = Tensor(exp / np.sum(exp, axis=-1, keepdims=True), (m,), "softmax")

    def _backprop():
        s = out.data
        inner = np.sum(out.grad * s, axis=-1, keepdims=True)
        m._accumulate(s * (out.grad - inner))

    out._backprop = _backprop
    return out


def frobenius_norm(m: Tensor, axes: tuple[int, int] = (-2, -1)) -> Tensor:
    """sqrt of the sum of squares over `axes`; the gradient at 0 is taken as 0."""
    m = as_tensor(m)
    norm = np.sqrt(np.sum(m.data * m.data, axis=axes))
    out = Tensor(norm, (m,), "fro")

    def _backprop():
        expanded = np.expand_dims(out.data, _normalize_axes(axes, m.ndim))
        safe = np.where(expanded > 0, expanded, 1.0)
        scale = np.where(expanded > 0, 1.0 / safe, 0.0)
        grad = np.expand_dims(out.grad, _normalize_axes(axes, m.ndim))
        m._accumulate(grad * m.data * scale)

    out._backprop = _backprop
    return out


def backward(loss: Tensor, leaves: Mapping[str, Tensor] | None = None) -> dict[str, np.ndarray]:
    """Back-propagates from a scalar `loss`.

    Returns the gradient of every named leaf; leaves the loss does not reach
    get zeros.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")

    loss.grad = np.ones_like(loss.data)
    for node in reversed(_topological_order(loss)):
        if node._backprop is not None and node.grad is not None:
            node._backprop()

    if leaves is None:
        return {}
    return {
        name: leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        for name, leaf in leaves.items()
    }


# -- helpers --------------------------------------------------------------------


def _topological_order(root: Tensor) -> list[Tensor]:
    # Iterative post-order; graphs from long sequences exceed the recursion limit
    order: list[Tensor] = []
    visited: set[int] = set()
    pending: list[tuple[Tensor, bool]] = [(root, False)]
    while pending:
        node, expanded = pending.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        pending.append((node, True))
        for child in node._children:
            if child.requires_grad and id(child) not in visited:
                pending.append((child, False))
    return order


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _normalize_axes(axis: int | Iterable[int], ndim: int) -> tuple[int, ...]:
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(sorted(a % ndim for a in axes))


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, slice)) or p is Ellipsis or p is None for p in parts)
