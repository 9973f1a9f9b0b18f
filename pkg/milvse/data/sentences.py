"""Sentence text -> T x D word-vector sequences through a pretrained table."""

import string
import zipfile
from pathlib import Path
from typing import Mapping

import numpy as np

from milvse.utils.errors import DatasetError, EmptySentenceError
from milvse.utils.fetch_file import fetch_file
from milvse.utils.logger import logger


# Twitter-trained 200-d vectors, matching the sentence encoder's default width
DEFAULT_TABLE_URL = "https://nlp.stanford.edu/data/glove.twitter.27B.zip"
DEFAULT_TABLE_MEMBER = "glove.twitter.27B.200d.txt"

_STRIP_PUNCTUATION = str.maketrans("", "", string.punctuation + "‘’“”")


def tokenize(text: str) -> list[str]:
    """Lowercase, drop punctuation, split on whitespace."""
    return text.lower().translate(_STRIP_PUNCTUATION).split()


def featurize_sentence(text: str, table: Mapping[str, np.ndarray]) -> np.ndarray:
    """One row per token; out-of-vocabulary tokens become zero rows."""
    if not table:
        raise DatasetError("The word-embedding table is empty.")
    width = len(next(iter(table.values())))
    tokens = tokenize(text)
    known = [token in table for token in tokens]
    if not any(known):
        raise EmptySentenceError(f"No in-vocabulary tokens in sentence: {text!r}")

    features = np.zeros((len(tokens), width), dtype=np.float32)
    for row, (token, in_vocab) in enumerate(zip(tokens, known)):
        if in_vocab:
            features[row] = table[token]
    return features


def load_embedding_table(path: Path, limit: int | None = None) -> dict[str, np.ndarray]:
    """Reads `word v1 ... vD` lines; malformed lines are skipped."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Embedding table not found: {path}")

    table: dict[str, np.ndarray] = {}
    width = None
    skipped = 0
    with path.open("r", encoding="utf-8", errors="replace") as file:
        for line in file:
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                skipped += 1
                continue
            try:
                vector = np.array(parts[1:], dtype=np.float32)
            except ValueError:
                skipped += 1
                continue
            if width is None:
                width = vector.size
            elif vector.size != width:
                raise DatasetError(
                    f"{path}: word '{parts[0]}' has {vector.size} values, expected {width}"
                )
            table[parts[0]] = vector
            if limit is not None and len(table) >= limit:
                break

    if skipped:
        logger.warning(f"Skipped {skipped} malformed lines in {path}")
    logger.info(f"Loaded {len(table)} word vectors of width {width} from {path}")
    return table


def fetch_embedding_table(
    dest_dir: Path,
    url: str = DEFAULT_TABLE_URL,
    member: str | None = DEFAULT_TABLE_MEMBER,
    retries: int = 2,
) -> Path:
    """Downloads a word table (optionally one member of a zip archive)."""
    dest_dir = Path(dest_dir)
    archive = fetch_file(url, dest_dir / url.rsplit("/", 1)[-1], retries=retries)
    if archive is None:
        raise DatasetError(f"Could not download the embedding table from {url}")
    if member is None:
        return archive
    return extract_member(archive, member, dest_dir)


def extract_member(archive: Path, member: str, dest_dir: Path) -> Path:
    try:
        with zipfile.ZipFile(archive) as bundle:
            if member not in bundle.namelist():
                raise DatasetError(f"{archive} has no member '{member}'")
            extracted = Path(bundle.extract(member, dest_dir))
    except zipfile.BadZipFile as e:
        raise DatasetError(f"{archive} is not a zip archive: {e}") from None
    logger.info(f"Extracted {member} to {extracted}")
    return extracted
