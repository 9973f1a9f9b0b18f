import json
from dataclasses import replace

import numpy as np
import pytest

from milvse.data.dataset import describe_dataset, load_dataset
from milvse.data.features import read_features
from milvse.data.synthetic import (
    SyntheticSpec,
    generate_synthetic,
    nearest_concepts,
    write_synthetic,
)
from milvse.utils.errors import DatasetError


def test_spec_validation():
    with pytest.raises(DatasetError):
        SyntheticSpec(per_modality=2, shared=3)
    with pytest.raises(DatasetError):
        SyntheticSpec(concepts=4, per_modality=3, shared=1)
    with pytest.raises(DatasetError):
        SyntheticSpec(noise=-0.1)
    with pytest.raises(DatasetError):
        SyntheticSpec(per_modality=3, min_len=2)


def test_noiseless_segments_recover_their_concepts(tiny_spec):
    data = generate_synthetic(replace(tiny_spec, noise=0.0))
    for pair_id, truth in data.truth["pairs"].items():
        for side, sequence, concepts in (
            ("video", data.videos[truth["video_id"]], data.video_concepts),
            ("sentence", data.sentences[pair_id], data.sentence_concepts),
        ):
            planted = truth[side]
            expected = np.repeat(planted["concepts"], np.diff(planted["bounds"]))
            np.testing.assert_array_equal(nearest_concepts(sequence, concepts), expected)


def test_shared_and_private_concepts(tiny_spec):
    data = generate_synthetic(tiny_spec)
    pairing = data.pairing
    for truth in data.truth["pairs"].values():
        video = set(truth["video"]["concepts"])
        sentence = set(truth["sentence"]["concepts"])
        linked = {c for c in video if pairing[c] in sentence}
        assert linked == set(truth["shared"])
        assert len(video) == len(sentence) == tiny_spec.per_modality


def test_noiseless_pairing_oracle_ranks_every_truth_first():
    spec = SyntheticSpec(pairs=12, concepts=12, per_modality=1, shared=1, video_dim=6,
                         sentence_dim=5, min_len=2, max_len=5, noise=0.0, seed=9)
    data = generate_synthetic(spec)
    video_ids = [t["video_id"] for t in data.truth["pairs"].values()]
    labels = {v: nearest_concepts(data.videos[v], data.video_concepts)[0] for v in video_ids}
    for pair_id, truth in data.truth["pairs"].items():
        sentence_concept = nearest_concepts(data.sentences[pair_id], data.sentence_concepts)[0]
        scores = {v: float(data.pairing[c] == sentence_concept) for v, c in labels.items()}
        assert scores[truth["video_id"]] == max(scores.values())


def test_same_seed_writes_identical_files(tmp_path, tiny_spec):
    first = write_synthetic(generate_synthetic(tiny_spec), tmp_path / "a")
    second = write_synthetic(generate_synthetic(tiny_spec), tmp_path / "b")
    for name in ("videos.mvft", "sentences.mvft", "manifest.tsv", "concepts.json"):
        assert (first.parent / name).read_bytes() == (second.parent / name).read_bytes()
    truth = json.loads((first.parent / "concepts.json").read_text(encoding="utf-8"))
    assert len(truth["pairs"]) == tiny_spec.pairs
    planted = truth["pairs"]["p00000"]
    bounds = planted["video"]["bounds"]
    assert all(isinstance(cut, int) for cut in bounds)
    assert bounds[0] == 0 and bounds == sorted(bounds)
    assert len(bounds) == len(planted["video"]["concepts"]) + 1
    assert bounds[-1] == len(read_features(first.parent / "videos.mvft")[planted["video_id"]])


def test_written_dataset_loads_back(tiny_manifest, tiny_spec):
    dataset = load_dataset(tiny_manifest)
    assert len(dataset.manifest) == tiny_spec.pairs
    assert (dataset.video_dim, dataset.sentence_dim) == (5, 4)
    assert len(read_features(tiny_manifest.parent / "videos.mvft")) == tiny_spec.pairs
    summary = describe_dataset(dataset)
    assert summary["splits"] == {"train": 16, "val": 2, "test": 2}
    assert tiny_spec.min_len <= summary["video_length_mean"] <= tiny_spec.max_len


def test_text_sentences_need_a_table(tmp_path, tiny_manifest):
    manifest = tmp_path / "text.tsv"
    manifest.write_text(
        f"p0\t{tiny_manifest.parent / 'videos.mvft'}#v00000\tdog runs\ttrain\n"
        f"p1\t{tiny_manifest.parent / 'videos.mvft'}#v00001\tzzz qqq\ttrain\n",
        encoding="utf-8",
    )
    with pytest.raises(DatasetError):
        load_dataset(manifest)
    table = {"dog": np.ones(3, dtype=np.float32), "runs": np.zeros(3, dtype=np.float32)}
    dataset = load_dataset(manifest, table)
    assert [r.pair_id for r in dataset.manifest.records] == ["p0"]
    assert dataset.sentences["p0"].shape == (2, 3)
    assert describe_dataset(dataset, table)["token_coverage"] == 1.0
