"""Brute-force sentence-to-video search over K embeddings per video."""

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from milvse.data.dataset import PairedDataset
from milvse.encoder.encode import encode_items
from milvse.numerics.functional import NORM_EPS
from milvse.retrieval.metrics import RetrievalReport, report_from_ranks
from milvse.trainer.checkpoint import Checkpoint
from milvse.trainer.sampling import subsample_sequence
from milvse.utils.errors import (
    ContractError,
    DatasetError,
    DegenerateRowError,
    DimensionError,
)
from milvse.utils.logger import logger


UNIT_TOLERANCE = 1e-6


@dataclass
class EmbeddingIndex:
    """Video ids and their N x K x d unit-row embeddings."""

    ids: list[str]
    embeddings: np.ndarray
    # Row-pair dot products evaluated so far, K^2 per scored item
    pair_products: int = 0

    def __post_init__(self):
        if self.embeddings.ndim != 3 or self.embeddings.shape[0] != len(self.ids):
            raise DimensionError(
                f"{len(self.ids)} ids for embeddings of shape {self.embeddings.shape}"
            )
        if len(set(self.ids)) != len(self.ids):
            raise DatasetError("Index ids must be unique.")
        norms = np.linalg.norm(self.embeddings, axis=-1)
        if norms.size and np.max(np.abs(norms - 1.0)) > UNIT_TOLERANCE:
            raise ContractError("Index rows must have unit norm.")
        self._position = {item_id: n for n, item_id in enumerate(self.ids)}

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, item_id: object) -> bool:
        return item_id in self._position

    @property
    def K(self) -> int:
        return self.embeddings.shape[1]

    @property
    def d(self) -> int:
        return self.embeddings.shape[2]

    def position(self, item_id: str) -> int:
        if item_id not in self._position:
            raise DatasetError(f"'{item_id}' is not in the index")
        return self._position[item_id]

    def score_all(self, query: np.ndarray) -> np.ndarray:
        """MIL max similarity of a K x d unit-row query against every item."""
        if len(self) == 0:
            raise DatasetError("Cannot query an empty index.")
        if query.shape != self.embeddings.shape[1:]:
            raise DimensionError(
                f"Query of shape {query.shape} against items of shape {self.embeddings.shape[1:]}"
            )
        self.pair_products += len(self) * self.K * self.K
        return score(query, self.embeddings)


def normalize_rows(phi: np.ndarray) -> np.ndarray:
    phi = phi.astype(np.float64)
    norms = np.linalg.norm(phi, axis=-1, keepdims=True)
    if np.any(norms <= NORM_EPS):
        raise DegenerateRowError("An embedding row has ~zero norm and cannot be normalized.")
    return phi / norms


def score(query: np.ndarray, item: np.ndarray) -> float | np.ndarray:
    """max_ij <query_i, item_j> over K x d unit-row matrices.

    `item` may be a stack of items (N x K x d); one score per item is returned.
    """
    best = np.einsum("kd,...jd->...kj", query, item).max(axis=(-2, -1))
    return float(best) if best.ndim == 0 else best


def embed_sequences(
    sequences: Sequence[np.ndarray], checkpoint: Checkpoint, modality: str
) -> np.ndarray:
    """Eval-mode (subsampled, no dropout) unit-row embeddings, n x K x d."""
    cfg = checkpoint.config
    encoder = cfg.video if modality == "video" else cfg.sentence
    if not sequences:
        return np.zeros((0, cfg.K, cfg.d))
    items = [subsample_sequence(s, encoder.max_len, "eval") for s in sequences]
    encoded = encode_items(checkpoint.params, modality, encoder, items, cfg.pooling_kind)
    return normalize_rows(np.stack([phi for phi, _ in encoded]))


def build_index(
    videos: Mapping[str, np.ndarray] | Iterable[tuple[str, np.ndarray]],
    checkpoint: Checkpoint,
) -> EmbeddingIndex:
    pairs = list(videos.items()) if isinstance(videos, Mapping) else list(videos)
    ids = [item_id for item_id, _ in pairs]
    if len(set(ids)) != len(ids):
        raise DatasetError("Duplicate video ids in the corpus.")
    embeddings = embed_sequences([features for _, features in pairs], checkpoint, "video")
    logger.debug(f"Indexed {len(ids)} videos")
    return EmbeddingIndex(ids, embeddings)


def search(query: np.ndarray, index: EmbeddingIndex, k: int) -> list[tuple[str, float]]:
    """Top-k (id, score): score descending, id ascending on ties."""
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    scores = index.score_all(query)
    order = sorted(range(len(index)), key=lambda n: (-scores[n], index.ids[n]))
    return [(index.ids[n], float(scores[n])) for n in order[:k]]


def pessimistic_rank(scores: np.ndarray, truth: int) -> int:
    """1 + items scoring higher + other items tying with the truth."""
    target = scores[truth]
    ties = int(np.sum(scores == target)) - 1
    return 1 + int(np.sum(scores > target)) + ties


def rank_in_index(query: np.ndarray, index: EmbeddingIndex, truth_id: str) -> int:
    truth = index.position(truth_id)
    return pessimistic_rank(index.score_all(query), truth)


def query(
    sentence: np.ndarray, index: EmbeddingIndex, checkpoint: Checkpoint, k: int = 10
) -> list[tuple[str, float]]:
    """Encodes one sentence (T x D) and returns its top-k videos."""
    if len(index) == 0:
        raise DatasetError("Cannot query an empty index.")
    (embedding,) = embed_sequences([sentence], checkpoint, "sentence")
    return search(embedding, index, k)


def rank_of(
    sentence: np.ndarray, index: EmbeddingIndex, checkpoint: Checkpoint, truth_id: str
) -> int:
    index.position(truth_id)
    (embedding,) = embed_sequences([sentence], checkpoint, "sentence")
    return rank_in_index(embedding, index, truth_id)


def split_videos(dataset: PairedDataset, split: str) -> dict[str, np.ndarray]:
    """The split's distinct videos, in manifest order."""
    return {r.video_id: dataset.videos[r.video_id] for r in dataset.pairs(split)}


def evaluate(
    dataset: PairedDataset,
    index: EmbeddingIndex,
    checkpoint: Checkpoint,
    split: str = "test",
) -> RetrievalReport:
    """Ranks every split sentence's ground-truth video among the indexed videos."""
    records = dataset.pairs(split)
    if not records:
        raise DatasetError(f"The '{split}' split is empty.")
    missing = [r.video_id for r in records if r.video_id not in index]
    if missing:
        raise DatasetError(f"{len(missing)} ground-truth videos are not indexed, e.g. '{missing[0]}'")

    queries = embed_sequences([dataset.sentences[r.pair_id] for r in records], checkpoint, "sentence")
    ranks = [rank_in_index(q, index, r.video_id) for q, r in zip(queries, records)]
    return report_from_ranks(ranks, len(index))


def evaluate_split(
    dataset: PairedDataset, checkpoint: Checkpoint, split: str = "test"
) -> RetrievalReport:
    """evaluate() against an index of the split's own videos."""
    index = build_index(split_videos(dataset, split), checkpoint)
    return evaluate(dataset, index, checkpoint, split)


def embed_with_attention(
    sequence: np.ndarray, checkpoint: Checkpoint, modality: str
) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode K x d embeddings (unnormalized) and their K x T attention map."""
    cfg = checkpoint.config
    encoder = cfg.video if modality == "video" else cfg.sentence
    item = subsample_sequence(sequence, encoder.max_len, "eval")
    ((phi, attention),) = encode_items(checkpoint.params, modality, encoder, [item], cfg.pooling_kind)
    return phi, attention
