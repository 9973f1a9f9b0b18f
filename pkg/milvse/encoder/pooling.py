from dataclasses import dataclass

import numpy as np

from milvse.numerics.tensor import Tensor, concat


@dataclass
class EmbeddingSet:
    """K embeddings (rows of phi, K x d) and the K x T attention map behind them.

    Batched sets carry a leading batch axis on both.
    """

    phi: Tensor
    attention: Tensor

    def __getitem__(self, index) -> "EmbeddingSet":
        return EmbeddingSet(self.phi[index], self.attention[index])


def last_state_attention(lengths, steps: int, dtype) -> np.ndarray:
    """One-hot record at the last valid step, shaped (..., 1, T)."""
    lengths = np.asarray(lengths)
    return (np.arange(steps) == (lengths[..., None] - 1)).astype(dtype)[..., None, :]


def pool_last_states(H: Tensor, lengths=None) -> EmbeddingSet:
    """[h_T forward ; h_1 backward] of d x T hidden states, as a K=1 set.

    With a batch (B x d x T) `lengths` picks each item's last valid step;
    without it the last column is used.
    """
    half = H.shape[-2] // 2
    steps = H.shape[-1]
    last = last_state_attention(steps if lengths is None else lengths, steps, H.dtype)
    forward = (H[..., :half, :] * last).sum(axis=-1)
    backward = H[..., half:, 0]
    phi = concat([forward, backward], axis=-1)[..., None, :]
    return EmbeddingSet(phi, Tensor(last))
