import os
import logging
from typing import Sequence

import numpy as np
import torch

logger = logging.getLogger(__name__)

_TRUE_VALUES = {"1", "true", "yes", "on"}


def env_flag(name: str, default: bool = False) -> bool:
    """Read a boolean environment variable."""
    value = os.getenv(name)
    if value is None:
        return default
    return value.strip().lower() in _TRUE_VALUES


def debug_enabled() -> bool:
    """Per-step invariant checks are on when PATCHFORGE_DEBUG is set."""
    return env_flag("PATCHFORGE_DEBUG")


def configure_determinism(deterministic: bool = None) -> None:
    """
    Pin torch to reproducible kernels.

    Args:
        deterministic: override for PATCHFORGE_DETERMINISTIC (default on)
    """
    if deterministic is None:
        deterministic = env_flag("PATCHFORGE_DETERMINISTIC", default=True)
    if deterministic:
        torch.use_deterministic_algorithms(True)
        torch.set_num_threads(1)
        logger.debug("Deterministic mode: single-threaded torch, deterministic kernels")
    else:
        torch.use_deterministic_algorithms(False)


def derive_seed(*keys: int) -> int:
    """Derive an independent 63-bit seed from a tuple of integer keys."""
    state = np.random.SeedSequence(list(keys)).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


def torch_generator(*keys: int) -> torch.Generator:
    """A CPU torch generator seeded from `derive_seed(*keys)`."""
    generator = torch.Generator()
    generator.manual_seed(derive_seed(*keys))
    return generator


def numpy_rng(keys: Sequence[int]) -> np.random.Generator:
    """A numpy generator keyed by a sequence of integers."""
    return np.random.default_rng(list(keys))
