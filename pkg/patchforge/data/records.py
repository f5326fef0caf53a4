import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import torch

from patchforge.core.errors import ClassIdOutOfRange, DomainError, ShapeMismatch
from patchforge.core.runtime import debug_enabled, numpy_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SampleRecord:
    """An image/label pair: image [3, H, W] in unit RGB, label [H, W] integer class ids."""
    image: torch.Tensor
    label: torch.Tensor
    id: str

    @property
    def height(self) -> int:
        return int(self.label.shape[0])

    @property
    def width(self) -> int:
        return int(self.label.shape[1])

    def validate(self, num_classes: int, ignore_index: int) -> "SampleRecord":
        """Check the record invariants; returns self for chaining."""
        if self.image.dim() != 3 or self.image.shape[0] != 3 or tuple(self.image.shape[1:]) != tuple(self.label.shape):
            raise ShapeMismatch(f"record {self.id}: image {list(self.image.shape)} vs label {list(self.label.shape)}")
        if self.image.min() < 0 or self.image.max() > 1:
            raise DomainError(f"record {self.id}: image values outside [0, 1]")
        valid = self.label[self.label != ignore_index]
        if valid.numel() and (valid.min() < 0 or valid.max() >= num_classes):
            raise ClassIdOutOfRange(f"record {self.id}: label ids outside [0, {num_classes})")
        return self


class SegmentationDataset(ABC):
    """Random-access, read-only collection of SampleRecords in a fixed id order."""

    num_classes: int
    ignore_index: int
    class_names: List[str]
    split: str

    @abstractmethod
    def __len__(self) -> int:
        ...

    @abstractmethod
    def load(self, index: int) -> SampleRecord:
        ...

    @property
    def ids(self) -> List[str]:
        return [self.load(i).id for i in range(len(self))]

    @property
    def mean(self) -> Tuple[float, float, float]:
        """Per-channel pad value for transforms."""
        return (0.485, 0.456, 0.406)

    def __getitem__(self, index: int) -> SampleRecord:
        if index < 0:
            index += len(self)
        if not 0 <= index < len(self):
            raise IndexError(f"index {index} out of range for {len(self)} records")
        record = self.load(index)
        if debug_enabled():
            record.validate(self.num_classes, self.ignore_index)
        return record

    def __iter__(self) -> Iterator[SampleRecord]:
        for index in range(len(self)):
            yield self[index]

    def subset(self, indices: Sequence[int]) -> "SubsetDataset":
        return SubsetDataset(self, indices)


class SubsetDataset(SegmentationDataset):
    """A fixed selection of another dataset's records."""

    def __init__(self, parent: SegmentationDataset, indices: Sequence[int]):
        self.parent = parent
        self.indices = list(indices)
        self.num_classes = parent.num_classes
        self.ignore_index = parent.ignore_index
        self.class_names = parent.class_names
        self.split = parent.split

    def __len__(self) -> int:
        return len(self.indices)

    def load(self, index: int) -> SampleRecord:
        return self.parent[self.indices[index]]

    @property
    def mean(self) -> Tuple[float, float, float]:
        return self.parent.mean


def seeded_subset(dataset: SegmentationDataset, size: Optional[int], seed: int) -> SegmentationDataset:
    """A fixed random subset in ascending index order; the whole dataset when size is None or large."""
    if size is None or size >= len(dataset):
        return dataset
    picked = numpy_rng([seed, len(dataset), size]).choice(len(dataset), size=size, replace=False)
    return dataset.subset(sorted(int(i) for i in picked))


def stack_records(records: Sequence[SampleRecord]) -> Tuple[torch.Tensor, torch.Tensor]:
    """Stack equally sized records into ([B, 3, H, W], [B, H, W])."""
    images = torch.stack([record.image for record in records])
    labels = torch.stack([record.label.to(torch.int64) for record in records])
    return images, labels
