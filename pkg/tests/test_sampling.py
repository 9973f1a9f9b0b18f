from collections import Counter

import numpy as np
import pytest

from milvse.data.manifest import PairRecord
from milvse.trainer.sampling import eval_indices, resample_negatives, subsample_sequence
from milvse.utils.errors import ContractError, DatasetError


def pairs_of(count: int) -> list[PairRecord]:
    return [PairRecord(f"p{i}", f"v.mvft#v{i}", f"s.mvft#p{i}", "train") for i in range(count)]


def test_short_sequences_are_padded_not_sampled(rng):
    sequence = rng.standard_normal((10, 3))
    padded, length = subsample_sequence(sequence, 32, "train", rng)
    assert length == 10
    assert padded.shape == (32, 3)
    np.testing.assert_array_equal(padded[:10], sequence)
    assert not padded[10:].any()


def test_eval_subsampling_is_uniform_and_inclusive():
    indices = eval_indices(64, 32)
    assert indices[0] == 0 and indices[-1] == 63
    assert list(indices[:4]) == [0, 2, 4, 6]
    assert np.all(np.diff(indices) >= 1)
    sequence = np.arange(64.0)[:, None]
    sampled, length = subsample_sequence(sequence, 32, "eval")
    assert length == 32
    np.testing.assert_array_equal(sampled[:, 0], indices)


def test_train_subsampling_is_strided_and_seeded():
    sequence = np.arange(100.0)[:, None]
    first, _ = subsample_sequence(sequence, 32, "train", np.random.default_rng(3))
    second, _ = subsample_sequence(sequence, 32, "train", np.random.default_rng(3))
    np.testing.assert_array_equal(first, second)
    steps = np.diff(first[:, 0])
    assert len(set(steps)) == 1 and 1 <= steps[0] <= 3
    assert first[-1, 0] <= 99


def test_subsampling_errors():
    with pytest.raises(ContractError):
        subsample_sequence(np.zeros((0, 3)), 32)
    with pytest.raises(ContractError):
        subsample_sequence(np.zeros((40, 3)), 32, "train")


def test_two_pairs_force_their_negatives():
    triplets = resample_negatives(pairs_of(2), epoch=1, seed=0)
    assert [(t.positive_id, t.negative_id) for t in triplets] == [("p0", "p1"), ("p1", "p0")]
    assert triplets[0].video_id == "v0"


def test_negatives_are_seeded_per_epoch():
    pairs = pairs_of(10)
    assert resample_negatives(pairs, 3, 7) == resample_negatives(pairs, 3, 7)
    assert resample_negatives(pairs, 3, 7) != resample_negatives(pairs, 4, 7)
    with pytest.raises(DatasetError):
        resample_negatives(pairs[:1], 1, 0)


def test_negatives_are_uniform_over_the_other_pairs():
    pairs = pairs_of(10)
    counts = Counter()
    for epoch in range(1000):
        for i, triplet in enumerate(resample_negatives(pairs, epoch, seed=1)):
            j = int(triplet.negative_id[1:])
            assert j != i
            counts[(j - i) % 10] += 1
    assert set(counts) == set(range(1, 10))
    for count in counts.values():
        assert abs(count / 10000 - 1 / 9) < 0.02
