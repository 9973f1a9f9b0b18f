"""Sequence -> K attention-pooled embeddings, for one modality."""

from typing import Mapping, Sequence

import numpy as np

from milvse.encoder.attention import attend_pool, self_attention
from milvse.encoder.batching import SequenceBatch, collate
from milvse.encoder.config import EncoderConfig, modality_view
from milvse.encoder.gru import bigru_batch
from milvse.encoder.pooling import EmbeddingSet, pool_last_states
from milvse.numerics.params import ParamStore
from milvse.numerics.tensor import Tensor
from milvse.utils.errors import ContractError, DimensionError


def encode_batch(
    batch: SequenceBatch,
    params: Mapping[str, Tensor],
    cfg: EncoderConfig,
    pooling: str = "attention",
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> EmbeddingSet:
    """Batched encode: phi is B x K x d, attention B x K x T."""
    if batch.features.shape[2] != cfg.input_dim:
        raise DimensionError(
            f"Features have width {batch.features.shape[2]}, encoder expects {cfg.input_dim}"
        )
    dtype = params["gru.fwd.W_z"].dtype
    features = batch.features.astype(dtype, copy=False)

    if training and cfg.dropout_rate > 0:
        if rng is None:
            raise ContractError("Training-mode dropout needs a seeded generator.")
        # Inverted dropout on x entering the gates; the recurrent path is untouched
        keep = rng.random(features.shape) >= cfg.dropout_rate
        features = features * keep / dtype.type(1.0 - cfg.dropout_rate)
        features = features.astype(dtype, copy=False)

    H, _ = bigru_batch(Tensor(features), batch.lengths, params)
    if pooling == "last_states":
        return pool_last_states(H, batch.lengths)
    if pooling != "attention":
        raise ContractError(f"Unknown pooling kind '{pooling}'.")

    A = self_attention(H, params, batch.lengths)
    return EmbeddingSet(attend_pool(A, H), A)


def encode(
    features: np.ndarray,
    length: int,
    params: Mapping[str, Tensor],
    cfg: EncoderConfig,
    pooling: str = "attention",
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> EmbeddingSet:
    """Encodes one sequence (T x D, valid prefix `length`) into K x d embeddings."""
    if length < 1:
        raise ContractError("Cannot encode a zero-length sequence.")
    features = np.asarray(features)
    batch = SequenceBatch(features[None, :length], np.array([length]))
    return encode_batch(batch, params, cfg, pooling, training, rng)[0]


def encode_items(
    store: ParamStore,
    modality: str,
    cfg: EncoderConfig,
    items: Sequence[tuple[np.ndarray, int]],
    pooling: str = "attention",
    batch_size: int = 64,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Eval-mode (phi, attention) arrays for already subsampled items."""
    params = modality_view(store.leaves(requires_grad=False), modality)
    results: list[tuple[np.ndarray, np.ndarray]] = []
    for start in range(0, len(items), batch_size):
        chunk = items[start : start + batch_size]
        batch = collate(chunk, dtype=store.dtype)
        embeddings = encode_batch(batch, params, cfg, pooling, training=False)
        for i, (_, length) in enumerate(chunk):
            results.append(
                (embeddings.phi.data[i].copy(), embeddings.attention.data[i, :, :length].copy())
            )
    return results
