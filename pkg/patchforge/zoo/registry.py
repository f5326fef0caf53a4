import importlib
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional

from patchforge.core.errors import ConfigError, DuplicateName, UnknownModel
from patchforge.models.schemas import ToyModelConfig, ToyModelKind
from patchforge.zoo.adapter import ModelAdapter
from patchforge.zoo.toy import build_toy_model

logger = logging.getLogger(__name__)

AdapterFactory = Callable[..., ModelAdapter]

_registry: Dict[str, AdapterFactory] = {}


def register_adapter(name: str, factory: AdapterFactory) -> None:
    """Make a factory available under a user-facing model name."""
    if name in _registry:
        raise DuplicateName(f"adapter '{name}' is already registered")
    _registry[name] = factory
    logger.debug(f"Registered adapter '{name}'")


def unregister_adapter(name: str) -> None:
    _registry.pop(name, None)


def registered_names() -> List[str]:
    return sorted(_registry)


def get_adapter(name: str, **options) -> ModelAdapter:
    """Build the adapter registered under name; options are passed to its factory."""
    if name not in _registry:
        raise UnknownModel(f"unknown model '{name}'; registered: {', '.join(registered_names()) or 'none'}")
    return _registry[name](**options)


def load_plugin(name: str, target: str) -> None:
    """
    Register an external factory given as 'package.module:callable'.

    Re-registering the same name with the same target is a no-op.
    """
    module_name, _, attr = target.partition(":")
    if not module_name or not attr:
        raise ConfigError(f"plugin must look like 'package.module:factory', got '{target}'")
    try:
        factory = getattr(importlib.import_module(module_name), attr)
    except (ImportError, AttributeError) as e:
        raise ConfigError(f"cannot load plugin '{target}': {e}") from e
    if _registry.get(name) is factory:
        return
    register_adapter(name, factory)


def _toy_factory(kind: ToyModelKind) -> AdapterFactory:
    def factory(
        num_classes: int = 6,
        width: int = 16,
        seed: int = 0,
        weights: Optional[str] = None,
        **_ignored,
    ) -> ModelAdapter:
        adapter = build_toy_model(ToyModelConfig(kind=kind, num_classes=num_classes, width=width, seed=seed))
        if weights:
            if not Path(weights).is_file():
                raise ConfigError(f"weights file {weights} does not exist")
            adapter.load_weights(weights)
        return adapter

    return factory


for _kind in ToyModelKind:
    register_adapter(_kind.value, _toy_factory(_kind))
