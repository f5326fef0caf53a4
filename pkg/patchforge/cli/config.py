"""
Run-config resolution: preset -> --config file -> --set overrides -> dedicated flags.

Everything is validated, paths included, before a command touches the filesystem.
"""
import copy
import json
import logging
from argparse import Namespace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import ValidationError

from patchforge.core.errors import ConfigError, MissingArtifacts
from patchforge.models.schemas import DatasetKind, RunConfig
from patchforge.store.artifacts import META_FILE, PATCH_SUFFIX

logger = logging.getLogger(__name__)

PRESET_DIR = Path(__file__).resolve().parent.parent / "presets"
DEFAULT_PRESET = "toy"


def available_presets() -> List[str]:
    return sorted(path.stem for path in PRESET_DIR.glob("*.json"))


def load_preset(name: str) -> Dict[str, Any]:
    path = PRESET_DIR / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"unknown preset '{name}'; available: {', '.join(available_presets())}")
    return json.loads(path.read_text(encoding="utf-8"))


def load_config_file(path: str) -> Dict[str, Any]:
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(f"config file {config_path} does not exist")
    try:
        data = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {config_path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {config_path} must hold a JSON object")
    return data


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; override wins, lists are replaced."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_override(item: str) -> Tuple[List[str], Any]:
    """'a.b=value' -> (['a', 'b'], value); value is JSON when it parses, a string otherwise."""
    key, sep, raw = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"--set expects key=value, got '{item}'")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return [part for part in key.strip().split(".")], value


def set_path(data: Dict[str, Any], keys: List[str], value: Any) -> None:
    node = data
    for key in keys[:-1]:
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise ConfigError(f"cannot set '{'.'.join(keys)}': '{key}' is not a section")
        node = child
    node[keys[-1]] = value


def split_model_spec(spec: str) -> Tuple[str, Optional[str]]:
    """'NAME@WEIGHTS' -> (NAME, WEIGHTS); weights are optional."""
    name, _, weights = spec.partition("@")
    return name, weights or None


def _flag_overrides(args: Namespace) -> Dict[str, Any]:
    flags: Dict[str, Any] = {}
    if getattr(args, "seed", None) is not None:
        flags["seed"] = args.seed
    if getattr(args, "out", None):
        flags["output_dir"] = args.out
    if getattr(args, "tag", None):
        flags["tag"] = args.tag
    if getattr(args, "data", None):
        flags["dataset"] = {"kind": DatasetKind.CITYSCAPES_LAYOUT.value, "root": args.data}
    if getattr(args, "epochs", None) is not None:
        flags["train"] = {"epochs": args.epochs}
    models = getattr(args, "model", None) or []
    if models:
        name, weights = split_model_spec(models[0])
        flags["model"] = {"name": name}
        if weights:
            flags["model"]["weights"] = weights
        flags.setdefault("eval", {})["models"] = list(models)
    patches = getattr(args, "patch", None) or []
    if patches:
        flags.setdefault("eval", {})["patches"] = list(patches)
    if getattr(args, "save_predictions", None) is not None:
        flags.setdefault("eval", {})["save_predictions"] = args.save_predictions
    if getattr(args, "workers", None) is not None:
        flags.setdefault("eval", {})["workers"] = args.workers
    return flags


def check_paths(config: RunConfig, command: str) -> None:
    """Every referenced input must exist before any side effect."""
    if config.dataset.kind == DatasetKind.CITYSCAPES_LAYOUT:
        root = Path(config.dataset.root)
        if not root.is_dir():
            raise ConfigError(f"dataset root {root} does not exist")
    if command in ("train-patch",) and config.model.weights and not Path(config.model.weights).is_file():
        raise ConfigError(f"weights file {config.model.weights} does not exist")
    if command in ("eval", "transfer"):
        if not config.eval.patches:
            raise ConfigError("no patches to evaluate; pass --patch <dir>.apf")
        for spec in config.eval.models:
            _, weights = split_model_spec(spec)
            if weights and not Path(weights).is_file():
                raise ConfigError(f"weights file {weights} does not exist")
        for patch in config.eval.patches:
            if not (Path(patch) / META_FILE).is_file():
                raise MissingArtifacts(f"patch artifact {patch} does not exist")
    if command != "plot" and not config.output_dir:
        raise ConfigError("an output directory is required (--out or output_dir)")


def resolve_config(args: Namespace, command: str) -> RunConfig:
    """Merge every configuration source into a validated RunConfig."""
    data = load_preset(getattr(args, "preset", None) or DEFAULT_PRESET)
    if getattr(args, "config", None):
        data = deep_merge(data, load_config_file(args.config))
    for item in getattr(args, "set", None) or []:
        keys, value = parse_override(item)
        set_path(data, keys, value)
    data = deep_merge(data, _flag_overrides(args))
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration:\n{e}") from e
    check_paths(config, command)
    logger.debug(f"Resolved config: {config.model_dump(mode='json')}")
    return config


def patch_tag(path: str) -> str:
    name = Path(path).name
    return name[: -len(PATCH_SUFFIX)] if name.endswith(PATCH_SUFFIX) else name
