from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from milvse.data.features import read_features
from milvse.data.manifest import SPLITS, DatasetManifest, PairRecord, read_manifest
from milvse.data.sentences import featurize_sentence, tokenize
from milvse.utils.errors import DatasetError, EmptySentenceError
from milvse.utils.logger import logger


FEATURE_SUFFIX = ".mvft"


@dataclass
class PairedDataset:
    """A manifest with every video and sentence resolved to a T x D matrix."""

    manifest: DatasetManifest
    videos: dict[str, np.ndarray]  # keyed by video id
    sentences: dict[str, np.ndarray]  # keyed by pair id

    def pairs(self, split: str) -> list[PairRecord]:
        return self.manifest.split(split)

    @property
    def video_dim(self) -> int:
        return next(iter(self.videos.values())).shape[1]

    @property
    def sentence_dim(self) -> int:
        return next(iter(self.sentences.values())).shape[1]


def is_feature_ref(field: str) -> bool:
    return f"{FEATURE_SUFFIX}#" in field


def load_dataset(
    manifest: DatasetManifest | Path,
    table: Mapping[str, np.ndarray] | None = None,
) -> PairedDataset:
    """Resolves video refs and sentence refs/text relative to the manifest."""
    if not isinstance(manifest, DatasetManifest):
        manifest = read_manifest(Path(manifest))
    if not manifest.records:
        raise DatasetError("The manifest has no pairs.")

    files: dict[Path, dict[str, np.ndarray]] = {}

    def resolve(ref: str, default_id: str) -> np.ndarray:
        file_part, _, item_id = ref.partition("#")
        path = (manifest.root / file_part).resolve()
        if path not in files:
            files[path] = read_features(path)
        item_id = item_id or default_id
        if item_id not in files[path]:
            raise DatasetError(f"{path} has no item '{item_id}'")
        return files[path][item_id]

    videos: dict[str, np.ndarray] = {}
    sentences: dict[str, np.ndarray] = {}
    dropped = 0
    kept: list[PairRecord] = []
    for record in manifest.records:
        if is_feature_ref(record.sentence):
            sentences[record.pair_id] = resolve(record.sentence, record.pair_id)
        else:
            if table is None:
                raise DatasetError(
                    f"Pair '{record.pair_id}' has a text sentence but no embedding table was given"
                )
            try:
                sentences[record.pair_id] = featurize_sentence(record.sentence, table)
            except EmptySentenceError as e:
                logger.warning(f"Dropping pair '{record.pair_id}': {e}")
                dropped += 1
                continue
        videos[record.video_id] = resolve(record.video_ref, record.pair_id)
        kept.append(record)

    if dropped:
        logger.warning(f"Dropped {dropped} pairs without in-vocabulary words.")
    dataset = PairedDataset(DatasetManifest(kept, manifest.root), videos, sentences)
    _check_widths(dataset)
    return dataset


def _check_widths(dataset: PairedDataset) -> None:
    for name, items in (("video", dataset.videos), ("sentence", dataset.sentences)):
        widths = {matrix.shape[1] for matrix in items.values()}
        if len(widths) > 1:
            raise DatasetError(f"Mixed {name} feature widths: {sorted(widths)}")


def describe_dataset(
    dataset: PairedDataset, table: Mapping[str, np.ndarray] | None = None
) -> dict:
    """Pair counts per split, sequence length statistics and vocabulary coverage."""
    video_lengths = np.array([m.shape[0] for m in dataset.videos.values()])
    sentence_lengths = np.array([m.shape[0] for m in dataset.sentences.values()])
    summary = {
        "pairs": len(dataset.manifest),
        "splits": {tag: len(dataset.pairs(tag)) for tag in SPLITS},
        "videos": len(dataset.videos),
        "video_dim": dataset.video_dim,
        "sentence_dim": dataset.sentence_dim,
        "video_length_mean": float(video_lengths.mean()),
        "video_length_median": float(np.median(video_lengths)),
        "sentence_length_mean": float(sentence_lengths.mean()),
        "sentence_length_median": float(np.median(sentence_lengths)),
    }
    texts = [r.sentence for r in dataset.manifest.records if not is_feature_ref(r.sentence)]
    if texts and table is not None:
        tokens = [token for text in texts for token in tokenize(text)]
        summary["vocabulary_size"] = len(set(tokens))
        summary["token_coverage"] = float(np.mean([t in table for t in tokens]))
    return summary
