"""
Datasets: record types, the Cityscapes-layout reader and the synthetic shapes generator
"""
from patchforge.core.errors import ConfigError
from patchforge.data.batching import batches
from patchforge.data.cityscapes import CityscapesLayout, load_cityscapes_layout, materialize
from patchforge.data.records import SampleRecord, SegmentationDataset, seeded_subset, stack_records
from patchforge.data.synthetic import SyntheticShapes, synth_shapes
from patchforge.models.schemas import DatasetKind, DatasetSpec


def build_dataset(spec: DatasetSpec, split: str) -> SegmentationDataset:
    """Open one split described by a DatasetSpec."""
    if spec.kind == DatasetKind.CITYSCAPES_LAYOUT:
        return CityscapesLayout(spec.root, split, num_classes=spec.num_classes, ignore_index=spec.ignore_index)
    if spec.kind == DatasetKind.SYNTH_SHAPES:
        n_images = spec.n_train if split == "train" else spec.n_val
        return SyntheticShapes(
            n_images,
            height=spec.height,
            width=spec.width,
            num_classes=spec.num_classes,
            seed=spec.seed,
            split=split,
            ignore_index=spec.ignore_index,
            cache=spec.cache,
        )
    raise ConfigError(f"unknown dataset kind '{spec.kind}'")


__all__ = [
    "SampleRecord",
    "SegmentationDataset",
    "CityscapesLayout",
    "SyntheticShapes",
    "batches",
    "build_dataset",
    "load_cityscapes_layout",
    "materialize",
    "seeded_subset",
    "stack_records",
    "synth_shapes",
]
