"""Checkpoint files.

Layout (little-endian): b"MVCK", version u32, parameter count u32, then per
parameter name byte-length u32, UTF-8 name, rank u32, dims u32 each, float32
values row-major; then a JSON byte-length u32 and the UTF-8 JSON block
{"config": ..., "epoch": ..., "loss": ...}.
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from milvse.numerics.params import ParamStore
from milvse.trainer.config import TrainConfig
from milvse.utils.errors import CheckpointError, ConfigError
from milvse.utils.logger import logger


MAGIC = b"MVCK"
VERSION = 1
U32 = struct.Struct("<I")
FLOAT = np.dtype("<f4")


@dataclass
class Checkpoint:
    params: ParamStore
    config: TrainConfig
    epoch: int
    loss: float


def save_checkpoint(checkpoint: Checkpoint, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = json.dumps(
        {
            "config": checkpoint.config.to_dict(),
            "epoch": checkpoint.epoch,
            "loss": checkpoint.loss,
        }
    ).encode("utf-8")

    partial = path.with_suffix(path.suffix + ".part")
    with partial.open("wb") as file:
        file.write(MAGIC)
        file.write(U32.pack(VERSION))
        file.write(U32.pack(len(checkpoint.params)))
        for name, value in checkpoint.params.items():
            encoded = name.encode("utf-8")
            file.write(U32.pack(len(encoded)))
            file.write(encoded)
            file.write(U32.pack(value.ndim))
            for dim in value.shape:
                file.write(U32.pack(dim))
            file.write(np.ascontiguousarray(value, dtype=FLOAT).tobytes())
        file.write(U32.pack(len(meta)))
        file.write(meta)
    partial.replace(path)

    logger.info(f"Checkpoint (epoch {checkpoint.epoch}) written to {path}")
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    """Parameters come back in the config's precision."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    blob = path.read_bytes()
    offset = 0

    def take(size: int, what: str) -> bytes:
        nonlocal offset
        if offset + size > len(blob):
            raise CheckpointError(f"{path} is truncated while reading {what}")
        chunk = blob[offset : offset + size]
        offset += size
        return chunk

    def u32(what: str) -> int:
        return U32.unpack(take(4, what))[0]

    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (magic {blob[:4]!r})")
    offset = 4
    version = u32("the header")
    if version != VERSION:
        raise CheckpointError(f"{path} has unsupported version {version}")

    arrays: dict[str, np.ndarray] = {}
    for index in range(u32("the header")):
        what = f"parameter {index}"
        try:
            name = take(u32(what), what).decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(f"{path}: {what} has a name that is not UTF-8") from None
        shape = tuple(u32(what) for _ in range(u32(what)))
        size = int(np.prod(shape, dtype=np.int64))
        raw = take(size * FLOAT.itemsize, f"parameter '{name}'")
        if name in arrays:
            raise CheckpointError(f"{path} repeats parameter '{name}'")
        arrays[name] = np.frombuffer(raw, dtype=FLOAT).reshape(shape)

    try:
        meta = json.loads(take(u32("the config block"), "the config block").decode("utf-8"))
        config = TrainConfig.from_dict(meta["config"])
        epoch, loss = int(meta["epoch"]), float(meta["loss"])
    except (json.JSONDecodeError, UnicodeDecodeError, KeyError, ConfigError) as e:
        raise CheckpointError(f"{path} has an unreadable config block: {e}") from e

    params = ParamStore({name: value.astype(config.dtype) for name, value in arrays.items()})
    logger.info(f"Loaded checkpoint (epoch {epoch}, {len(params)} parameters) from {path}")
    return Checkpoint(params, config, epoch, loss)
