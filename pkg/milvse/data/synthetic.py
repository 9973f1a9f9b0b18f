"""Planted-concept paired sequences.

Each modality has C unit concept vectors; a fixed random pairing links video
concept c to sentence concept pairing[c]. A pair shows m concepts per side,
s of them linked across modalities, the rest private to their side. With
s < m the association is implicit (few related segment pairs); with s = m it
is explicit.
"""

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from milvse.data.features import write_features
from milvse.data.manifest import (
    MIN_PAIRS_TO_SPLIT,
    DatasetManifest,
    PairRecord,
    split_dataset,
    write_manifest,
)
from milvse.utils.errors import DatasetError
from milvse.utils.logger import logger


VIDEO_FILE = "videos.mvft"
SENTENCE_FILE = "sentences.mvft"
MANIFEST_FILE = "manifest.tsv"
TRUTH_FILE = "concepts.json"


@dataclass
class SyntheticSpec:
    pairs: int = 2000
    concepts: int = 8
    per_modality: int = 3
    shared: int = 1
    video_dim: int = 32
    sentence_dim: int = 16
    min_len: int = 6
    max_len: int = 24
    noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.shared <= self.per_modality <= self.concepts:
            raise DatasetError(
                f"Need 1 <= shared ({self.shared}) <= per_modality ({self.per_modality}) "
                f"<= concepts ({self.concepts})"
            )
        if self.concepts < 2 * self.per_modality - self.shared:
            raise DatasetError(
                f"{self.concepts} concepts cannot keep private concepts unrelated "
                f"(need >= {2 * self.per_modality - self.shared})"
            )
        if self.noise < 0:
            raise DatasetError(f"Noise must be >= 0, got {self.noise}")
        if self.pairs < 1 or self.min_len < self.per_modality or self.max_len < self.min_len:
            raise DatasetError(
                "Need pairs >= 1 and per_modality <= min_len <= max_len, got "
                f"pairs={self.pairs}, min_len={self.min_len}, max_len={self.max_len}"
            )


@dataclass
class SyntheticData:
    manifest: DatasetManifest
    videos: dict[str, np.ndarray]
    sentences: dict[str, np.ndarray]
    video_concepts: np.ndarray  # C x video_dim, unit rows
    sentence_concepts: np.ndarray  # C x sentence_dim, unit rows
    pairing: np.ndarray  # video concept c <-> sentence concept pairing[c]
    truth: dict


def unit_vectors(rng: np.random.Generator, count: int, width: int) -> np.ndarray:
    vectors = rng.standard_normal((count, width))
    return vectors / np.linalg.norm(vectors, axis=1, keepdims=True)


def segment_sequence(
    rng: np.random.Generator,
    concepts: np.ndarray,
    order: np.ndarray,
    length: int,
    noise: float,
) -> tuple[np.ndarray, list[int]]:
    """Contiguous segments, one per concept in `order`, plus Gaussian noise."""
    cuts = np.sort(rng.choice(np.arange(1, length), size=len(order) - 1, replace=False))
    bounds = [0, *cuts.tolist(), length]
    sequence = np.empty((length, concepts.shape[1]))
    for concept, start, stop in zip(order, bounds[:-1], bounds[1:]):
        sequence[start:stop] = concepts[concept]
    if noise > 0:
        sequence += noise * rng.standard_normal(sequence.shape)
    return sequence.astype(np.float32), bounds


def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    rng = np.random.default_rng(spec.seed)
    all_concepts = np.arange(spec.concepts)
    video_concepts = unit_vectors(rng, spec.concepts, spec.video_dim)
    sentence_concepts = unit_vectors(rng, spec.concepts, spec.sentence_dim)
    pairing = rng.permutation(spec.concepts)
    private = spec.per_modality - spec.shared

    records: list[PairRecord] = []
    videos: dict[str, np.ndarray] = {}
    sentences: dict[str, np.ndarray] = {}
    truth_pairs: dict[str, dict] = {}
    for n in range(spec.pairs):
        pair_id, video_id = f"p{n:05d}", f"v{n:05d}"

        shared = rng.choice(all_concepts, size=spec.shared, replace=False)
        video_private = rng.choice(np.setdiff1d(all_concepts, shared), size=private, replace=False)
        shown = np.concatenate([shared, video_private])
        # Sentence-private concepts never mate with anything the video shows
        sentence_private = rng.choice(
            np.setdiff1d(all_concepts, pairing[shown]), size=private, replace=False
        )
        video_order = rng.permutation(shown)
        sentence_order = rng.permutation(np.concatenate([pairing[shared], sentence_private]))

        video_length = int(rng.integers(spec.min_len, spec.max_len + 1))
        sentence_length = int(rng.integers(spec.min_len, spec.max_len + 1))
        videos[video_id], video_bounds = segment_sequence(
            rng, video_concepts, video_order, video_length, spec.noise
        )
        sentences[pair_id], sentence_bounds = segment_sequence(
            rng, sentence_concepts, sentence_order, sentence_length, spec.noise
        )

        records.append(
            PairRecord(pair_id, f"{VIDEO_FILE}#{video_id}", f"{SENTENCE_FILE}#{pair_id}")
        )
        truth_pairs[pair_id] = {
            "video_id": video_id,
            "shared": sorted(int(c) for c in shared),
            "video": {"concepts": video_order.tolist(), "bounds": video_bounds},
            "sentence": {"concepts": sentence_order.tolist(), "bounds": sentence_bounds},
        }

    manifest = DatasetManifest(records)
    if spec.pairs >= MIN_PAIRS_TO_SPLIT:
        manifest = split_dataset(manifest, spec.seed)
    else:
        manifest = DatasetManifest([replace(r, split="train") for r in records])

    truth = {"spec": asdict(spec), "pairing": pairing.tolist(), "pairs": truth_pairs}
    logger.info(
        f"Generated {spec.pairs} planted pairs ({spec.shared} of {spec.per_modality} "
        f"concepts shared, {spec.concepts} concepts, noise {spec.noise})"
    )
    return SyntheticData(
        manifest, videos, sentences, video_concepts, sentence_concepts, pairing, truth
    )


def nearest_concepts(sequence: np.ndarray, concepts: np.ndarray) -> np.ndarray:
    """Index of the closest (by dot product) unit concept vector for every step."""
    return np.argmax(sequence @ concepts.T, axis=1)


def write_synthetic(data: SyntheticData, out_dir: Path) -> Path:
    """Writes features, manifest and the concept sidecar; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_features(out_dir / VIDEO_FILE, data.videos)
    write_features(out_dir / SENTENCE_FILE, data.sentences)
    manifest_path = write_manifest(data.manifest, out_dir / MANIFEST_FILE)

    truth_path = out_dir / TRUTH_FILE
    truth_path.write_text(json.dumps(data.truth, indent=2), encoding="utf-8")
    logger.info(f"Concept truth written to {truth_path}")
    return manifest_path
