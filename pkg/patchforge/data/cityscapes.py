"""
Reader (and writer) for the Cityscapes directory layout:

    leftImg8bit/<split>/<city>/<id>_leftImg8bit.png
    gtFine/<split>/<city>/<id>_gtFine_labelTrainIds.png
"""
import logging
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
import torch
from PIL import Image

from patchforge.core.errors import LayoutError, MissingPair
from patchforge.data.records import SampleRecord, SegmentationDataset

logger = logging.getLogger(__name__)

IMAGE_SUFFIX = "_leftImg8bit.png"
LABEL_SUFFIX = "_gtFine_labelTrainIds.png"
NUM_TRAIN_CLASSES = 19
IGNORE_INDEX = 255

CITYSCAPES_CLASSES = [
    "road", "sidewalk", "building", "wall", "fence", "pole", "traffic light",
    "traffic sign", "vegetation", "terrain", "sky", "person", "rider", "car",
    "truck", "bus", "train", "motorcycle", "bicycle",
]

CITYSCAPES_PALETTE = [
    (128, 64, 128), (244, 35, 232), (70, 70, 70), (102, 102, 156), (190, 153, 153),
    (153, 153, 153), (250, 170, 30), (220, 220, 0), (107, 142, 35), (152, 251, 152),
    (70, 130, 180), (220, 20, 60), (255, 0, 0), (0, 0, 142), (0, 0, 70),
    (0, 60, 100), (0, 80, 100), (0, 0, 230), (119, 11, 32),
]


def decode_image(path: Path) -> torch.Tensor:
    """8-bit RGB PNG -> [3, H, W] float32 in [0, 1]."""
    with Image.open(path) as img:
        array = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return torch.from_numpy(array.astype(np.float32) / 255.0).permute(2, 0, 1).contiguous()


def decode_label(path: Path) -> torch.Tensor:
    with Image.open(path) as img:
        array = np.asarray(img, dtype=np.uint8)
    if array.ndim != 2:
        raise LayoutError(f"label {path} is not a single-channel image")
    return torch.from_numpy(array.astype(np.int64))


class CityscapesLayout(SegmentationDataset):
    """Lazily decoded Cityscapes-layout split, ids in lexicographic order."""

    def __init__(
        self,
        root: Union[str, Path],
        split: str,
        num_classes: int = NUM_TRAIN_CLASSES,
        ignore_index: int = IGNORE_INDEX,
        class_names: List[str] = None,
    ):
        self.root = Path(root)
        self.split = split
        self.num_classes = num_classes
        self.ignore_index = ignore_index
        if class_names is None:
            class_names = CITYSCAPES_CLASSES if num_classes == NUM_TRAIN_CLASSES else [f"class_{c}" for c in range(num_classes)]
        self.class_names = list(class_names)
        self.pairs = self._scan()

    def _scan(self) -> List[Tuple[str, Path, Path]]:
        if not self.root.is_dir():
            raise LayoutError(f"dataset root {self.root} does not exist")
        image_dir = self.root / "leftImg8bit" / self.split
        label_dir = self.root / "gtFine" / self.split
        if not image_dir.is_dir():
            raise LayoutError(f"missing image directory {image_dir}")
        if not label_dir.is_dir():
            raise LayoutError(f"missing label directory {label_dir}")

        pairs = []
        for image_path in image_dir.glob(f"*/*{IMAGE_SUFFIX}"):
            city = image_path.parent.name
            sample_id = image_path.name[: -len(IMAGE_SUFFIX)]
            label_path = label_dir / city / f"{sample_id}{LABEL_SUFFIX}"
            if not label_path.is_file():
                raise MissingPair(sample_id, str(label_path))
            pairs.append((sample_id, image_path, label_path))
        if not pairs:
            raise LayoutError(f"no '*{IMAGE_SUFFIX}' images under {image_dir}")
        pairs.sort(key=lambda pair: pair[0])
        logger.info(f"Found {len(pairs)} {self.split} records under {self.root}")
        return pairs

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def ids(self) -> List[str]:
        return [sample_id for sample_id, _, _ in self.pairs]

    def load(self, index: int) -> SampleRecord:
        sample_id, image_path, label_path = self.pairs[index]
        image = decode_image(image_path)
        label = decode_label(label_path)
        if tuple(image.shape[1:]) != tuple(label.shape):
            raise LayoutError(f"{sample_id}: image {list(image.shape[1:])} and label {list(label.shape)} sizes differ")
        bad = (label >= self.num_classes) & (label != self.ignore_index)
        if bad.any():
            raise LayoutError(
                f"{sample_id}: label values must be < {self.num_classes} or {self.ignore_index}; "
                f"is {label_path.name} a labelTrainIds mask?"
            )
        return SampleRecord(image=image, label=label, id=sample_id)


def load_cityscapes_layout(root: Union[str, Path], split: str, **kwargs) -> CityscapesLayout:
    return CityscapesLayout(root, split, **kwargs)


def materialize(dataset: SegmentationDataset, root: Union[str, Path], split: str, city: str = "synth") -> Path:
    """Write every record of a dataset into the Cityscapes layout under root."""
    root = Path(root)
    image_dir = root / "leftImg8bit" / split / city
    label_dir = root / "gtFine" / split / city
    image_dir.mkdir(parents=True, exist_ok=True)
    label_dir.mkdir(parents=True, exist_ok=True)
    for record in dataset:
        pixels = (record.image.clamp(0, 1) * 255.0).round().to(torch.uint8).permute(1, 2, 0).contiguous().numpy()
        Image.fromarray(pixels).save(image_dir / f"{record.id}{IMAGE_SUFFIX}")
        labels = record.label.to(torch.uint8).numpy()
        Image.fromarray(labels).save(label_dir / f"{record.id}{LABEL_SUFFIX}")
    logger.info(f"Materialized {len(dataset)} records to {root} ({split})")
    return root
