import logging
import platform
import sys

import numpy as np
import psutil
import scipy

DIVIDER = "[---------] SYSTEM INFO [---------]"

logger = logging.getLogger(__name__)


def system_info() -> dict:
    vm = psutil.virtual_memory()
    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "system": f"{platform.system()} {platform.release()} {platform.machine()}",
        "physical_cores": psutil.cpu_count(logical=False),
        "total_cores": psutil.cpu_count(logical=True),
        "memory_total_gb": round(vm.total / (1024**3), 2),
        "memory_available_gb": round(vm.available / (1024**3), 2),
    }


def log_system_info():
    info = system_info()
    logger.debug(DIVIDER)
    for key, value in info.items():
        logger.debug(f"  {key}: {value}")
    logger.debug(DIVIDER)


def worker_count(cells: int) -> int:
    """Sweep pool size: physical cores, never more than there are cells."""
    cores = psutil.cpu_count(logical=False) or psutil.cpu_count(logical=True) or 1
    return max(1, min(cores, cells))
