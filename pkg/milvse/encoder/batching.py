from dataclasses import dataclass
from typing import Sequence

import numpy as np

from milvse.utils.errors import ContractError, DimensionError


@dataclass
class SequenceBatch:
    """Zero-padded B x T x D features plus each item's valid length."""

    features: np.ndarray
    lengths: np.ndarray

    def __post_init__(self):
        self.lengths = np.asarray(self.lengths, dtype=np.int64)
        if self.features.ndim != 3:
            raise DimensionError(f"SequenceBatch needs B x T x D features, got {self.features.shape}")
        if self.lengths.shape != (self.features.shape[0],):
            raise DimensionError(
                f"{self.lengths.shape[0]} lengths for a batch of {self.features.shape[0]}"
            )
        if np.any(self.lengths < 1) or np.any(self.lengths > self.features.shape[1]):
            raise ContractError(f"Lengths must lie in [1, {self.features.shape[1]}]")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def steps(self) -> int:
        return self.features.shape[1]


def collate(items: Sequence[tuple[np.ndarray, int]], dtype=np.float32) -> SequenceBatch:
    """Pads (features, length) items to the longest valid length in the batch."""
    if not items:
        raise ContractError("Cannot collate an empty batch.")
    width = items[0][0].shape[1]
    steps = max(length for _, length in items)
    features = np.zeros((len(items), steps, width), dtype=dtype)
    for i, (sequence, length) in enumerate(items):
        if sequence.shape[1] != width:
            raise DimensionError(f"Item {i} has width {sequence.shape[1]}, expected {width}")
        features[i, :length] = sequence[:length]
    return SequenceBatch(features, np.array([length for _, length in items]))
