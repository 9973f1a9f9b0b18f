from typing import Mapping

import numpy as np

from milvse.numerics.tensor import Tensor, row_softmax
from milvse.utils.errors import DimensionError, InvalidAttentionError


def valid_mask(lengths, steps: int) -> np.ndarray:
    """Boolean (..., 1, T) mask of positions before each length."""
    lengths = np.asarray(lengths)
    return (np.arange(steps) < lengths[..., None])[..., None, :]


def self_attention(H: Tensor, params: Mapping[str, Tensor], lengths) -> Tensor:
    """A = softmax(W2 tanh(W1 H)) row-wise, masked beyond each valid length.

    H is d x T (or B x d x T); the result is K x T (or B x K x T).
    """
    W1, W2 = params["attn.W1"], params["attn.W2"]
    if H.shape[-2] != W1.shape[1]:
        raise DimensionError(f"H has shape {H.shape} but W1 expects width {W1.shape[1]}")
    logits = W2 @ (W1 @ H).tanh()
    return row_softmax(logits, valid_mask(lengths, H.shape[-1]))


def check_attention(A: np.ndarray) -> None:
    tolerance = max(1e-6, 64 * np.finfo(A.dtype).eps)
    if np.any(A < 0) or np.any(np.abs(A.sum(axis=-1) - 1.0) > tolerance):
        raise InvalidAttentionError("Attention rows must be distributions summing to 1.")


def attend_pool(A: Tensor, H: Tensor) -> Tensor:
    """Phi = A H^T: K embeddings as convex combinations of the columns of H."""
    if A.shape[-1] != H.shape[-1]:
        raise DimensionError(f"attend_pool got A {A.shape} and H {H.shape}")
    check_attention(A.data)
    return A @ H.mT
