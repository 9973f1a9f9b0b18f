"""Binary feature files: per item an id and a T x D float32 matrix.

Layout (little-endian): b"MVFT", version u32, item count u32, then per item
id byte-length u32, UTF-8 id, T u32, D u32, T*D float32 row-major.
"""

import struct
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from milvse.utils.errors import (
    BadMagicError,
    DuplicateIdError,
    FeatureFileError,
    TruncatedFileError,
)
from milvse.utils.logger import logger


MAGIC = b"MVFT"
VERSION = 1
U32 = struct.Struct("<I")
FLOAT = np.dtype("<f4")

FeatureItems = Mapping[str, np.ndarray] | Iterable[tuple[str, np.ndarray]]


def write_features(path: Path, items: FeatureItems) -> Path:
    """Writes items to `path`; widths must agree and ids must be unique."""
    pairs = list(items.items()) if isinstance(items, Mapping) else list(items)

    seen: set[str] = set()
    width = None
    for index, (item_id, matrix) in enumerate(pairs):
        if item_id in seen:
            raise DuplicateIdError(f"Duplicate feature id '{item_id}' (item {index})")
        seen.add(item_id)
        if matrix.ndim != 2 or matrix.shape[0] < 1:
            raise FeatureFileError(f"Item '{item_id}' must be T x D with T >= 1, got {matrix.shape}")
        if width is None:
            width = matrix.shape[1]
        elif matrix.shape[1] != width:
            raise FeatureFileError(
                f"Item '{item_id}' has width {matrix.shape[1]}, file width is {width}"
            )

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as file:
        file.write(MAGIC)
        file.write(U32.pack(VERSION))
        file.write(U32.pack(len(pairs)))
        for item_id, matrix in pairs:
            encoded = item_id.encode("utf-8")
            file.write(U32.pack(len(encoded)))
            file.write(encoded)
            file.write(U32.pack(matrix.shape[0]))
            file.write(U32.pack(matrix.shape[1]))
            file.write(np.ascontiguousarray(matrix, dtype=FLOAT).tobytes())

    logger.info(f"Wrote {len(pairs)} feature items to {path}")
    return path


def read_features(path: Path) -> dict[str, np.ndarray]:
    """Reads a feature file into an ordered id -> float32 matrix map."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Feature file not found: {path}")
    blob = path.read_bytes()
    offset = 0

    def take(size: int, what: str) -> bytes:
        nonlocal offset
        if offset + size > len(blob):
            raise TruncatedFileError(f"{path} is truncated while reading {what}")
        chunk = blob[offset : offset + size]
        offset += size
        return chunk

    if blob[:4] != MAGIC:
        raise BadMagicError(f"{path} is not a feature file (magic {blob[:4]!r})")
    offset = 4
    (version,) = U32.unpack(take(4, "the header"))
    if version != VERSION:
        raise FeatureFileError(f"{path} has unsupported version {version}")
    (count,) = U32.unpack(take(4, "the header"))

    items: dict[str, np.ndarray] = {}
    for index in range(count):
        what = f"item {index}"
        (id_length,) = U32.unpack(take(4, what))
        try:
            item_id = take(id_length, what).decode("utf-8")
        except UnicodeDecodeError:
            raise FeatureFileError(f"{path}: {what} has an id that is not UTF-8") from None
        (steps,) = U32.unpack(take(4, what))
        (width,) = U32.unpack(take(4, what))
        raw = take(steps * width * FLOAT.itemsize, what)
        if item_id in items:
            raise DuplicateIdError(f"{path} repeats id '{item_id}' at item {index}")
        items[item_id] = np.frombuffer(raw, dtype=FLOAT).reshape(steps, width).astype(np.float32)

    logger.info(f"Loaded {len(items)} items from {path}")
    return items
