"""
settings.py
-----------
Process-level settings read from the environment.

- CORRLAB_OUT_DIR      output directory for CSV + manifests (default: runs)
- CORRLAB_WORKERS      worker processes per sweep (default: 1)
- CORRLAB_LOG_LEVEL    root log level (default: INFO)
- CORRLAB_MAX_NODES    resource guard on grid nodes x time steps
- CORRLAB_NUMBA_CACHE  set to 0 to disable the numba on-disk cache
"""
import logging
import os

OUT_DIR = os.getenv("CORRLAB_OUT_DIR", "runs")
LOG_LEVEL = os.getenv("CORRLAB_LOG_LEVEL", "INFO")
MAX_NODE_STEPS = float(os.getenv("CORRLAB_MAX_NODES", "2e10"))


def default_workers() -> int:
    try:
        return max(1, int(os.getenv("CORRLAB_WORKERS", "1")))
    except ValueError:
        return 1


def numba_cache_enabled() -> bool:
    if os.getenv("CORRLAB_NUMBA_CACHE", "1") in ("0", "false", "no"):
        return False
    # numba writes the cache next to the module; read-only installs can't
    return os.access(os.path.dirname(os.path.abspath(__file__)), os.W_OK)


def configure_logging(level: str = None) -> None:
    logging.basicConfig(
        level=(level or LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
