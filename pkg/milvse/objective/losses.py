"""Triplet ranking losses, the attention regularizer and the training objective."""

from dataclasses import dataclass

import numpy as np

from milvse.encoder.pooling import EmbeddingSet
from milvse.numerics.tensor import Tensor, as_tensor, frobenius_norm
from milvse.objective.config import LossConfig
from milvse.objective.similarity import similarity
from milvse.utils.errors import ContractError


@dataclass
class TripletEmbeddings:
    """Encoded (video, positive sentence, negative sentence) sets, batched."""

    video: EmbeddingSet
    positive: EmbeddingSet
    negative: EmbeddingSet


def triplet_delta(phi_v: Tensor, psi_pos: Tensor, psi_neg: Tensor, cfg: LossConfig) -> Tensor:
    """f(V, S+) - f(V, S-) under the configured similarity."""
    kind = cfg.similarity_kind
    return similarity(phi_v, psi_pos, kind) - similarity(phi_v, psi_neg, kind)


def hinge_loss(delta, rho: float) -> Tensor:
    return (rho - as_tensor(delta)).relu()


def pseudo_huber_loss(delta, rho: float, slope: float) -> Tensor:
    """slope^2 (sqrt(1 + ((rho - delta) / slope)^2) - 1), symmetric in rho - delta."""
    residual = (rho - as_tensor(delta)) / slope
    return slope**2 * ((residual * residual + 1.0).sqrt() - 1.0)


def ranking_loss(delta: Tensor, cfg: LossConfig) -> Tensor:
    if cfg.loss_kind == "hinge":
        return hinge_loss(delta, cfg.rho)
    return pseudo_huber_loss(delta, cfg.rho, cfg.delta)


def attention_penalty(A, beta: float) -> Tensor:
    """||A A^T - beta I||_F over the trailing K x T axes."""
    A = as_tensor(A)
    eye = np.eye(A.shape[-2], dtype=A.dtype)
    return frobenius_norm(A @ A.mT - beta * eye)


def total_objective(
    triplets: TripletEmbeddings, cfg: LossConfig, regularize: bool = True
) -> Tensor:
    """Sum over the batch of ranking loss + alpha * (R(A_v) + R(A_s+) + R(A_s-))."""
    if triplets.video.phi.shape[0] == 0:
        raise ContractError("total_objective needs a non-empty batch.")
    delta = triplet_delta(
        triplets.video.phi, triplets.positive.phi, triplets.negative.phi, cfg
    )
    per_triplet = ranking_loss(delta, cfg)
    if regularize and cfg.alpha > 0:
        penalty = (
            attention_penalty(triplets.video.attention, cfg.beta)
            + attention_penalty(triplets.positive.attention, cfg.beta)
            + attention_penalty(triplets.negative.attention, cfg.beta)
        )
        per_triplet = per_triplet + cfg.alpha * penalty
    return per_triplet.sum()
