import logging
import os


# Set up logging once for every milvse module
logging.basicConfig(
    level=os.environ.get("MILVSE_LOG_LEVEL", "INFO").upper(),
    format="%(asctime)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger("milvse")
