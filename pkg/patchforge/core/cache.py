import os
import logging
from pathlib import Path
from typing import Dict, Optional, Tuple

import torch

logger = logging.getLogger(__name__)

CACHE_ENV_VAR = "PATCHFORGE_CACHE"
SAMPLE_KEY_PREFIX = "sample:"


class LocalCache:
    def __init__(self):
        self.samples: Dict[str, Tuple[torch.Tensor, torch.Tensor]] = {}

    def clear(self):
        self.samples.clear()


local_cache = LocalCache()


def get_cache_dir() -> Optional[Path]:
    """Disk tier location from PATCHFORGE_CACHE; None keeps the cache in memory only."""
    location = os.getenv(CACHE_ENV_VAR)
    return Path(location) if location else None


def _disk_path(cache_key: str) -> Optional[Path]:
    cache_dir = get_cache_dir()
    if cache_dir is None:
        return None
    namespace, _, sample_id = cache_key.partition("/")
    return cache_dir / namespace / f"{sample_id}.pt"


def get_sample_from_cache(cache_key: str) -> Optional[Tuple[torch.Tensor, torch.Tensor]]:
    """
    Get a decoded (image, label) pair.
    Tries memory first, falls back to the disk tier.
    Returns None if not found.
    """
    memory_key = f"{SAMPLE_KEY_PREFIX}{cache_key}"
    if memory_key in local_cache.samples:
        return local_cache.samples[memory_key]

    path = _disk_path(cache_key)
    if path is not None and path.exists():
        try:
            payload = torch.load(path, map_location="cpu")
            sample = (payload["image"], payload["label"])
        except Exception as e:
            logger.warning(f"Unreadable cache entry {path}: {e}. Regenerating.")
            return None
        local_cache.samples[memory_key] = sample
        logger.debug(f"Disk cache hit for {cache_key}")
        return sample
    return None


def save_sample_to_cache(cache_key: str, image: torch.Tensor, label: torch.Tensor) -> None:
    """Save a decoded pair to memory and, when configured, to disk."""
    memory_key = f"{SAMPLE_KEY_PREFIX}{cache_key}"
    local_cache.samples[memory_key] = (image, label)

    path = _disk_path(cache_key)
    if path is None:
        return
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp_path = path.with_suffix(".tmp")
        torch.save({"image": image, "label": label}, tmp_path)
        os.replace(tmp_path, path)
    except OSError as e:
        logger.warning(f"Disk cache write failed for {path}: {e}. Using memory only.")


def clear_memory_cache() -> None:
    local_cache.clear()
