import logging
from typing import Optional

from patchforge.cli.config import split_model_spec
from patchforge.data import build_dataset
from patchforge.data.records import SegmentationDataset
from patchforge.models.schemas import RunConfig
from patchforge.zoo.adapter import ModelAdapter
from patchforge.zoo.registry import get_adapter, load_plugin

logger = logging.getLogger(__name__)


def build_model(config: RunConfig, spec: Optional[str] = None) -> ModelAdapter:
    """Adapter for 'NAME[@WEIGHTS]' (default: the config's model section)."""
    section = config.model
    name, weights = split_model_spec(spec) if spec else (section.name, section.weights)
    if section.plugin and name == section.name:
        load_plugin(name, section.plugin)
    options = dict(section.options)
    options.setdefault("num_classes", config.dataset.num_classes)
    options.setdefault("width", section.width)
    options.setdefault("seed", section.seed)
    options["weights"] = weights or (section.weights if name == section.name else None)
    adapter = get_adapter(name, **options)
    if adapter.num_classes != config.dataset.num_classes:
        logger.warning(
            f"{name} predicts {adapter.num_classes} classes but the dataset has {config.dataset.num_classes}"
        )
    return adapter


def open_split(config: RunConfig, split: str) -> SegmentationDataset:
    dataset = build_dataset(config.dataset, split)
    logger.info(f"Opened {config.dataset.kind.value} {split} split: {len(dataset)} images")
    return dataset
