"""
Artifact formats and run-directory ownership
"""
from patchforge.store.artifacts import load_patch, save_patch
from patchforge.store.rundir import RunDirectory, get_run_context

__all__ = ["RunDirectory", "get_run_context", "load_patch", "save_patch"]
