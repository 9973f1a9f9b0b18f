import signal
import sys
from typing import Callable
from milvse.utils.logger import logger


def on_exit(
    callback: Callable[[], object], message: str = "Process interrupted. Exiting..."
) -> None:
    """Runs `callback` (e.g. a checkpoint save) when the run is interrupted."""

    def handle_signal(*_):
        logger.info(message)
        try:
            callback()
        except Exception as e:
            logger.error(f"Cleanup after interrupt failed: {e}")
        finally:
            sys.exit(130)

    signal.signal(signal.SIGINT, handle_signal)
