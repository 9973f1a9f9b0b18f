import requests
from pathlib import Path
from time import sleep
from milvse.utils.logger import logger


USER_AGENT = "milvse/0.1 (+embedding table download)"
CHUNK_SIZE = 1 << 20


def fetch_file(url: str, dest: Path, retries: int = 0) -> Path | None:
    """Downloads `url` to `dest` with retries, returning the path or None."""
    if retries < 0:
        raise ValueError("Number of retries must be a non-negative integer.")

    headers = {"User-Agent": USER_AGENT}
    dest.parent.mkdir(parents=True, exist_ok=True)
    partial = dest.with_suffix(dest.suffix + ".part")

    attempt = 0
    while attempt <= retries:
        try:
            with requests.get(url, headers=headers, timeout=30, stream=True) as response:
                response.raise_for_status()
                with partial.open("wb") as file:
                    for chunk in response.iter_content(chunk_size=CHUNK_SIZE):
                        file.write(chunk)
            partial.replace(dest)
            logger.info(f"Downloaded {url} to {dest}")
            return dest
        except requests.exceptions.RequestException as e:
            logger.warning(f"Attempt {attempt+1} failed: {e}")
            attempt += 1
            if attempt <= retries:
                sleep(2 * (attempt + 1))

    partial.unlink(missing_ok=True)
    logger.error(f"Failed to fetch {url} after {retries + 1} attempts.")
    return None
