import os
import contextlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Union

from patchforge.core.errors import RunDirectoryLocked
from patchforge.models.schemas import RunConfig
from patchforge.store.artifacts import write_json

logger = logging.getLogger(__name__)

LOCK_FILE = ".lock"
RESOLVED_CONFIG_FILE = "config.resolved.json"
PREDICTIONS_DIR = "predictions"
REPORTS_DIR = "reports"
FIGURES_DIR = "figures"


@dataclass
class RunDirectory:
    """A run directory owned by the current invocation."""
    root: Path

    def path(self, *parts: str) -> Path:
        return self.root.joinpath(*parts)

    def subdir(self, name: str) -> Path:
        directory = self.root / name
        directory.mkdir(parents=True, exist_ok=True)
        return directory


def _acquire_lock(root: Path) -> Path:
    lock_path = root / LOCK_FILE
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as e:
        raise RunDirectoryLocked(
            f"{root} is in use by another invocation (remove {lock_path} if that run is gone)"
        ) from e
    with os.fdopen(fd, "w") as handle:
        handle.write(f"{os.getpid()}\n")
    return lock_path


@contextlib.contextmanager
def get_run_context(output_dir: Union[str, Path], config: RunConfig) -> Iterator[RunDirectory]:
    """Context manager for a run directory: lock, resolved config, release."""
    root = Path(output_dir)
    root.mkdir(parents=True, exist_ok=True)
    lock_path = _acquire_lock(root)
    try:
        write_json(root / RESOLVED_CONFIG_FILE, config.model_dump(mode="json"))
        yield RunDirectory(root)
    except Exception:
        logger.error(f"Run in {root} failed; artifacts written so far are kept")
        raise
    finally:
        lock_path.unlink(missing_ok=True)
