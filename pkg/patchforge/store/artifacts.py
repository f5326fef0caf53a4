"""
On-disk formats: patch artifacts (`<tag>.apf/`), training history, decay curves and reports.
"""
import os
import json
import logging
from pathlib import Path
from typing import Any, List, Union

import numpy as np
import torch
from PIL import Image
from pydantic import BaseModel, ValidationError

from patchforge.core.errors import DomainError, FormatError, MissingArtifacts, ShapeMismatch
from patchforge.core.patch import FORMAT_VERSION, Patch, PatchMeta
from patchforge.models.schemas import DecayPayload, EvalReportPayload, PretrainReportPayload

logger = logging.getLogger(__name__)

PATCH_SUFFIX = ".apf"
META_FILE = "meta.json"
VALUES_FILE = "values.bin"
PREVIEW_FILE = "preview.png"
HISTORY_FILE = "history.json"
DECAY_FILE = "decay.json"
TRANSFER_CSV = "transfer_matrix.csv"
CHECKPOINT_TAG = "checkpoint"
LITTLE_ENDIAN_F32 = np.dtype("<f4")

PathLike = Union[str, Path]


def write_json(path: PathLike, data: Any) -> Path:
    """Write JSON atomically (temp file + rename), keys sorted for byte-stable output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_name(path.name + ".tmp")
    tmp_path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp_path, path)
    return path


def read_json(path: PathLike) -> Any:
    path = Path(path)
    if not path.is_file():
        raise MissingArtifacts(f"{path} does not exist")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path} is not valid JSON: {e}") from e


def patch_dir(directory: PathLike, tag: str) -> Path:
    return Path(directory) / f"{tag}{PATCH_SUFFIX}"


def save_patch(patch: Patch, path: PathLike) -> Path:
    """
    Write a patch artifact directory.

    values.bin holds little-endian float32 in [3, h, w] row-major order; preview.png is an 8-bit
    rendering for people and is never read back.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    values = patch.values.detach().cpu().to(torch.float32).contiguous().numpy()

    meta = patch.meta.to_dict()
    meta["shape"] = list(values.shape)
    raw = values.astype(LITTLE_ENDIAN_F32).tobytes(order="C")
    tmp_values = path / (VALUES_FILE + ".tmp")
    tmp_values.write_bytes(raw)
    os.replace(tmp_values, path / VALUES_FILE)
    write_json(path / META_FILE, meta)

    preview = np.floor(255.0 * values.transpose(1, 2, 0) + 0.5).astype(np.uint8)
    Image.fromarray(preview).save(path / PREVIEW_FILE)
    logger.debug(f"Saved patch {list(values.shape)} to {path}")
    return path


def load_patch(path: PathLike) -> Patch:
    path = Path(path)
    if not (path / META_FILE).is_file() or not (path / VALUES_FILE).is_file():
        raise MissingArtifacts(f"{path} is not a patch artifact (needs {META_FILE} and {VALUES_FILE})")
    meta_data = read_json(path / META_FILE)
    if not isinstance(meta_data, dict):
        raise FormatError(f"{path / META_FILE} must hold a JSON object")
    version = meta_data.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: format_version {version} is not supported (expected {FORMAT_VERSION})")
    try:
        meta = PatchMeta.from_dict(meta_data)
        shape = [int(v) for v in meta_data["shape"]]
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{path / META_FILE} is missing or has malformed fields: {e}") from e
    if len(shape) != 3 or shape[0] != 3 or min(shape) < 1:
        raise FormatError(f"{path}: invalid patch shape {shape}")

    raw = (path / VALUES_FILE).read_bytes()
    expected = shape[0] * shape[1] * shape[2] * LITTLE_ENDIAN_F32.itemsize
    if len(raw) != expected:
        raise FormatError(f"{path / VALUES_FILE} has {len(raw)} bytes, expected {expected}")
    values = np.frombuffer(raw, dtype=LITTLE_ENDIAN_F32).reshape(shape).astype(np.float32)
    try:
        return Patch(values=torch.from_numpy(values.copy()), meta=meta)
    except (DomainError, ShapeMismatch) as e:
        raise FormatError(f"{path}: corrupted values: {e}") from e


def save_history(records: List[dict], path: PathLike) -> Path:
    """history.json is a plain array of epoch records."""
    return write_json(path, records)


def load_history(path: PathLike) -> List[dict]:
    data = read_json(path)
    if not isinstance(data, list):
        raise FormatError(f"{path} must hold a JSON array of epoch records")
    return data


def save_payload(payload: BaseModel, path: PathLike) -> Path:
    return write_json(path, payload.model_dump(mode="json"))


def _load_payload(path: PathLike, model):
    try:
        return model.model_validate(read_json(path))
    except ValidationError as e:
        raise FormatError(f"{path} does not match the {model.__name__} schema: {e}") from e


def load_decay(path: PathLike) -> DecayPayload:
    return _load_payload(path, DecayPayload)


def load_report(path: PathLike) -> EvalReportPayload:
    return _load_payload(path, EvalReportPayload)


def load_pretrain_report(path: PathLike) -> PretrainReportPayload:
    return _load_payload(path, PretrainReportPayload)
