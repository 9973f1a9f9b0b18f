import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from milvse.utils.errors import DatasetError
from milvse.utils.logger import logger


SPLITS = ("train", "val", "test")
SPLIT_FRACTIONS = (0.8, 0.1, 0.1)
MIN_PAIRS_TO_SPLIT = 10


@dataclass
class PairRecord:
    """One video-sentence pair.

    `video_ref` is `path#item_id` (item id defaults to the pair id); `sentence`
    is either text or a feature ref ending in `.mvft#item_id`.
    """

    pair_id: str
    video_ref: str
    sentence: str
    split: str = ""

    @property
    def video_id(self) -> str:
        return self.video_ref.split("#", 1)[1] if "#" in self.video_ref else self.pair_id


@dataclass
class DatasetManifest:
    records: list[PairRecord]
    root: Path = field(default_factory=Path)

    def split(self, tag: str) -> list[PairRecord]:
        return [r for r in self.records if r.split == tag]

    def __len__(self) -> int:
        return len(self.records)


def read_manifest(path: Path) -> DatasetManifest:
    """Reads `pair_id, video_ref, sentence, split` tab-separated rows."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Manifest not found: {path}")

    records: list[PairRecord] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8", newline="") as file:
        reader = csv.reader(file, delimiter="\t", quoting=csv.QUOTE_NONE, escapechar="\\")
        for line_number, row in enumerate(reader, start=1):
            if not row or row[0].startswith("#"):
                continue
            if len(row) not in (3, 4):
                raise DatasetError(f"{path}:{line_number}: expected 3 or 4 columns, got {len(row)}")
            split = row[3] if len(row) == 4 else ""
            if split and split not in SPLITS:
                raise DatasetError(f"{path}:{line_number}: unknown split '{split}'")
            if row[0] in seen:
                raise DatasetError(f"{path}:{line_number}: duplicate pair id '{row[0]}'")
            seen.add(row[0])
            records.append(PairRecord(row[0], row[1], row[2], split))

    logger.info(f"Read {len(records)} pairs from {path}")
    return DatasetManifest(records, root=path.parent)


def write_manifest(manifest: DatasetManifest, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, delimiter="\t", quoting=csv.QUOTE_NONE, escapechar="\\")
        for record in manifest.records:
            writer.writerow([record.pair_id, record.video_ref, record.sentence, record.split])
    logger.info(f"Manifest with {len(manifest)} pairs written to {path}")
    return path


def split_counts(total: int) -> tuple[int, int, int]:
    train = int(np.floor(total * SPLIT_FRACTIONS[0] + 0.5))
    val = int(np.floor(total * SPLIT_FRACTIONS[1] + 0.5))
    return train, val, total - train - val


def split_dataset(manifest: DatasetManifest, seed: int) -> DatasetManifest:
    """Seeded shuffle, then contiguous 80/10/10 train/val/test tags."""
    total = len(manifest)
    if total < MIN_PAIRS_TO_SPLIT:
        raise DatasetError(f"Need at least {MIN_PAIRS_TO_SPLIT} pairs to split, got {total}")

    order = np.random.default_rng(seed).permutation(total)
    train, val, _ = split_counts(total)
    tags = [""] * total
    for rank, index in enumerate(order):
        tags[index] = "train" if rank < train else "val" if rank < train + val else "test"

    records = [replace(record, split=tag) for record, tag in zip(manifest.records, tags)]
    return DatasetManifest(records, root=manifest.root)
