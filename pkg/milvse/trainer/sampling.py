"""Per-epoch randomness: subsequence selection and negative sentences.

Each concern draws from its own stream seeded by (seed, epoch, stream), so
configurations trained with the same seed see the same data order and
negatives regardless of what else they do with randomness.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from milvse.data.manifest import PairRecord
from milvse.utils.errors import ContractError, DatasetError


NEGATIVE_STREAM = 1
SHUFFLE_STREAM = 2
SUBSAMPLE_STREAM = 3
DROPOUT_STREAM = 4
SUBSAMPLE_MODES = ("train", "eval")


def epoch_rng(seed: int, epoch: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, stream])


@dataclass(frozen=True)
class TripletRecord:
    video_id: str
    positive_id: str  # pair ids double as sentence ids
    negative_id: str


def eval_indices(length: int, max_len: int) -> np.ndarray:
    """round(i (length-1) / (max_len-1)) with halves rounded up."""
    if max_len == 1:
        return np.zeros(1, dtype=np.int64)
    positions = np.arange(max_len) * (length - 1) / (max_len - 1)
    return np.floor(positions + 0.5).astype(np.int64)


def train_indices(length: int, max_len: int, rng: np.random.Generator) -> np.ndarray:
    """max_len frames at a random stride from a random start."""
    stride = int(rng.integers(1, length // max_len + 1))
    start = int(rng.integers(0, length - stride * max_len + 1))
    return start + stride * np.arange(max_len)


def subsample_sequence(
    sequence: np.ndarray,
    max_len: int = 32,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, int]:
    """Returns (max_len x D zero-padded features, valid length)."""
    if mode not in SUBSAMPLE_MODES:
        raise ContractError(f"Unknown subsample mode '{mode}'.")
    length = sequence.shape[0]
    if length < 1:
        raise ContractError("Cannot subsample an empty sequence.")

    if length <= max_len:
        padded = np.zeros((max_len, sequence.shape[1]), dtype=sequence.dtype)
        padded[:length] = sequence
        return padded, length

    if mode == "train":
        if rng is None:
            raise ContractError("Train-mode subsampling needs a seeded generator.")
        indices = train_indices(length, max_len, rng)
    else:
        indices = eval_indices(length, max_len)
    return sequence[indices], max_len


def resample_negatives(
    pairs: Sequence[PairRecord], epoch: int, seed: int
) -> list[TripletRecord]:
    """One negative sentence per pair, uniform over the other pairs' sentences."""
    count = len(pairs)
    if count < 2:
        raise DatasetError(f"Negative sampling needs at least 2 training pairs, got {count}")
    rng = epoch_rng(seed, epoch, NEGATIVE_STREAM)
    picks = rng.integers(0, count - 1, size=count)
    # Skip over the positive: [0, n-1) maps onto every index but i
    picks += picks >= np.arange(count)
    return [
        TripletRecord(pair.video_id, pair.pair_id, pairs[j].pair_id)
        for pair, j in zip(pairs, picks)
    ]
