# spnet/config/__init__.py
import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

# Worker pool configuration
SPNET_THREADS = int(os.getenv("SPNET_THREADS", str(os.cpu_count() or 1)))
SPNET_LOG_LEVEL = os.getenv("SPNET_LOG_LEVEL", "INFO")

# Ray casting configuration
BVH_LEAF_SIZE = int(os.getenv("SPNET_BVH_LEAF_SIZE", "8"))
RAY_EPSILON = 1e-9

# Packaged defaults for RunConfig
CONFIG_DIR = Path(__file__).parent
DEFAULT_CONFIG_PATH = CONFIG_DIR / "config.yaml"

# View cache configuration
VIEW_CACHE_TTL_SECONDS = int(os.getenv("SPNET_VIEW_CACHE_TTL_SECONDS", "600"))
VIEW_CACHE_MAX_ENTRIES = int(os.getenv("SPNET_VIEW_CACHE_MAX_ENTRIES", "4096"))
