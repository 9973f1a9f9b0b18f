"""How alike a video's and a sentence's K embeddings are."""

from dataclasses import dataclass

import numpy as np

from milvse.numerics.functional import NORM_EPS, cosine, l2_normalize
from milvse.numerics.tensor import Tensor, as_tensor
from milvse.utils.errors import DegenerateRowError, DimensionError


@dataclass
class InstanceBag:
    """All K x K cosine scores f_ij between video row i and sentence row j."""

    scores: Tensor


def _check_shapes(phi: Tensor, psi: Tensor) -> None:
    if phi.shape != psi.shape:
        raise DimensionError(f"Embedding sets differ in shape: {phi.shape} vs {psi.shape}")


def concat_similarity(phi: Tensor, psi: Tensor) -> Tensor:
    """Cosine of the flattened K*d vectors."""
    phi, psi = as_tensor(phi), as_tensor(psi)
    _check_shapes(phi, psi)
    flat = phi.shape[:-2] + (phi.shape[-2] * phi.shape[-1],)
    return cosine(phi.reshape(flat), psi.reshape(flat))


def _check_rows(x: np.ndarray, side: str) -> None:
    norms = np.sqrt(np.sum(x * x, axis=-1))
    bad = np.argwhere(norms <= NORM_EPS)
    if bad.size:
        where = tuple(int(i) for i in bad[0])
        raise DegenerateRowError(f"{side} embedding row {where[-1]} (at {where}) has ~zero norm")


def instance_bag(phi: Tensor, psi: Tensor) -> InstanceBag:
    phi, psi = as_tensor(phi), as_tensor(psi)
    _check_shapes(phi, psi)
    _check_rows(phi.data, "video")
    _check_rows(psi.data, "sentence")
    return InstanceBag(l2_normalize(phi) @ l2_normalize(psi).mT)


def bag_max(bag: InstanceBag) -> Tensor:
    return bag.scores.max_trailing(2)


def similarity(phi: Tensor, psi: Tensor, kind: str) -> Tensor:
    if kind == "concat":
        return concat_similarity(phi, psi)
    return bag_max(instance_bag(phi, psi))


def best_instance(phi: np.ndarray, psi: np.ndarray) -> tuple[int, int, float]:
    """(i, j, score) of the video/sentence embedding pair realizing the max."""
    scores = instance_bag(Tensor(phi), Tensor(psi)).scores.data
    i, j = np.unravel_index(int(np.argmax(scores)), scores.shape)
    return int(i), int(j), float(scores[i, j])
