"""Composite operations built from the Tensor primitives."""

import numpy as np

from milvse.numerics.tensor import Tensor, as_tensor
from milvse.utils.errors import ContractError, DegenerateVectorError


NORM_EPS = 1e-8


def activation(x: Tensor, kind: str) -> Tensor:
    x = as_tensor(x)
    if kind == "tanh":
        return x.tanh()
    if kind == "sigmoid":
        return x.sigmoid()
    raise ContractError(f"Unknown activation '{kind}'.")


def l2_norm(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    return (x * x).sum(axis=axis, keepdims=keepdims).sqrt()


def check_norms(x: np.ndarray, what: str = "vector", eps: float = NORM_EPS) -> None:
    norms = np.sqrt(np.sum(x * x, axis=-1))
    if np.any(norms <= eps):
        raise DegenerateVectorError(
            f"Degenerate {what}: norm {float(np.min(norms)):.3g} <= {eps}"
        )


def cosine(u: Tensor, v: Tensor, axis: int = -1, eps: float = NORM_EPS) -> Tensor:
    """Cosine similarity along `axis`; rejects near-zero vectors."""
    u, v = as_tensor(u), as_tensor(v)
    if u.shape != v.shape:
        raise ContractError(f"cosine needs equal shapes, got {u.shape} and {v.shape}")
    check_norms(np.moveaxis(u.data, axis, -1), eps=eps)
    check_norms(np.moveaxis(v.data, axis, -1), eps=eps)
    dot = (u * v).sum(axis=axis)
    return dot / (l2_norm(u, axis=axis) * l2_norm(v, axis=axis))


def l2_normalize(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    return x / l2_norm(x, axis=axis, keepdims=True)
