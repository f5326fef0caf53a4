"""
Deterministic synthetic-shapes segmentation data.

Every image is a smooth background gradient (class 0) with 3-6 opaque shapes on top. A class id
fixes both the shape kind and its color, and labels are rasterized from the same geometry as the
pixels, so masks are exact by construction.
"""
import colorsys
import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import torch
from PIL import Image, ImageDraw

from patchforge.core.cache import get_sample_from_cache, save_sample_to_cache
from patchforge.core.errors import ConfigError
from patchforge.core.runtime import numpy_rng
from patchforge.data.records import SampleRecord, SegmentationDataset

logger = logging.getLogger(__name__)

DEFAULT_HEIGHT = 128
DEFAULT_WIDTH = 256
DEFAULT_NUM_CLASSES = 6
SHAPE_KINDS = ("rectangle", "disk", "triangle")
MIN_SHAPES = 3
MAX_SHAPES = 6
NOISE_STD = 0.02
SPLIT_KEYS = {"train": 0, "val": 1}

_BASE_COLORS = [
    (0.86, 0.16, 0.16),
    (0.16, 0.70, 0.22),
    (0.16, 0.26, 0.86),
    (0.92, 0.80, 0.10),
    (0.78, 0.20, 0.78),
    (0.10, 0.76, 0.80),
    (0.95, 0.50, 0.10),
    (0.95, 0.95, 0.95),
]


def class_shape_kind(class_id: int) -> str:
    return SHAPE_KINDS[(class_id - 1) % len(SHAPE_KINDS)]


def class_color(class_id: int) -> Tuple[float, float, float]:
    if class_id - 1 < len(_BASE_COLORS):
        return _BASE_COLORS[class_id - 1]
    hue = ((class_id - 1) * 0.618033988749895) % 1.0
    return colorsys.hsv_to_rgb(hue, 0.9, 0.9)


def class_names(num_classes: int) -> List[str]:
    return ["background"] + [f"{class_shape_kind(c)}_{c}" for c in range(1, num_classes)]


@dataclass(frozen=True)
class ShapeSpec:
    """One rendered shape: kind, class and the polygon / bounding box PIL draws."""
    kind: str
    class_id: int
    geometry: Tuple[float, ...]


def render_shape_mask(shape: ShapeSpec, height: int, width: int) -> np.ndarray:
    """Boolean [height, width] coverage of one shape."""
    canvas = Image.new("L", (width, height), 0)
    draw = ImageDraw.Draw(canvas)
    if shape.kind == "rectangle":
        draw.rectangle(shape.geometry, fill=1)
    elif shape.kind == "disk":
        draw.ellipse(shape.geometry, fill=1)
    elif shape.kind == "triangle":
        points = list(zip(shape.geometry[0::2], shape.geometry[1::2]))
        draw.polygon(points, fill=1)
    else:
        raise ValueError(f"unknown shape kind '{shape.kind}'")
    return np.asarray(canvas, dtype=np.uint8).astype(bool)


def compose_label(shapes: Sequence[ShapeSpec], height: int, width: int) -> np.ndarray:
    """Label mask of shapes painted in order, later shapes occluding earlier ones."""
    label = np.zeros((height, width), dtype=np.int64)
    for shape in shapes:
        label[render_shape_mask(shape, height, width)] = shape.class_id
    return label


class SyntheticShapes(SegmentationDataset):
    """Seeded shapes dataset; records are generated on access and optionally cached."""

    def __init__(
        self,
        n_images: int,
        height: int = DEFAULT_HEIGHT,
        width: int = DEFAULT_WIDTH,
        num_classes: int = DEFAULT_NUM_CLASSES,
        seed: int = 0,
        split: str = "train",
        ignore_index: int = 255,
        cache: bool = False,
    ):
        if num_classes < 2:
            raise ConfigError(f"synthetic shapes need at least 2 classes, got {num_classes}")
        if n_images < 1:
            raise ConfigError("synthetic shapes need at least one image")
        if height < 8 or width < 8:
            raise ConfigError(f"synthetic images must be at least 8x8, got {height}x{width}")
        if split not in SPLIT_KEYS:
            raise ConfigError(f"unknown split '{split}'")
        self.n_images = n_images
        self.height = height
        self.width = width
        self.num_classes = num_classes
        self.seed = seed
        self.split = split
        self.ignore_index = ignore_index
        self.cache = cache
        self.class_names = class_names(num_classes)

    def __len__(self) -> int:
        return self.n_images

    @property
    def mean(self) -> Tuple[float, float, float]:
        return (0.5, 0.5, 0.5)

    @property
    def cache_namespace(self) -> str:
        return f"synth-{self.seed}-{self.split}-{self.height}x{self.width}-c{self.num_classes}"

    def sample_id(self, index: int) -> str:
        return f"{self.split}_{index:05d}"

    @property
    def ids(self) -> List[str]:
        return [self.sample_id(i) for i in range(len(self))]

    def _rng(self, index: int) -> np.random.Generator:
        return numpy_rng([self.seed, SPLIT_KEYS[self.split], index])

    def layout(self, index: int) -> Tuple[Tuple[Tuple[float, float, float], Tuple[float, float, float], float], List[ShapeSpec]]:
        """Background gradient parameters and the shape list of one image."""
        rng = self._rng(index)
        color_a = tuple(float(v) for v in rng.uniform(0.3, 0.7, size=3))
        color_b = tuple(float(v) for v in rng.uniform(0.3, 0.7, size=3))
        angle = float(rng.uniform(0, 2 * math.pi))
        side = min(self.height, self.width)

        shapes = []
        for _ in range(int(rng.integers(MIN_SHAPES, MAX_SHAPES + 1))):
            class_id = int(rng.integers(1, self.num_classes))
            kind = class_shape_kind(class_id)
            cy = float(rng.uniform(0, self.height))
            cx = float(rng.uniform(0, self.width))
            if kind == "rectangle":
                half_h = float(rng.uniform(0.06, 0.22)) * side
                half_w = float(rng.uniform(0.06, 0.22)) * side
                geometry = (cx - half_w, cy - half_h, cx + half_w, cy + half_h)
            elif kind == "disk":
                radius = float(rng.uniform(0.08, 0.22)) * side
                geometry = (cx - radius, cy - radius, cx + radius, cy + radius)
            else:
                radius = float(rng.uniform(0.12, 0.3)) * side
                base = float(rng.uniform(0, 2 * math.pi))
                jitter = rng.uniform(-0.3, 0.3, size=3)
                points = []
                for k in range(3):
                    theta = base + 2 * math.pi * k / 3 + float(jitter[k])
                    points.extend([cx + radius * math.cos(theta), cy + radius * math.sin(theta)])
                geometry = tuple(points)
            shapes.append(ShapeSpec(kind=kind, class_id=class_id, geometry=geometry))
        return (color_a, color_b, angle), shapes

    def _render(self, index: int) -> Tuple[torch.Tensor, torch.Tensor]:
        (color_a, color_b, angle), shapes = self.layout(index)
        rows = np.linspace(-1.0, 1.0, self.height)[:, None]
        cols = np.linspace(-1.0, 1.0, self.width)[None, :]
        ramp = (np.cos(angle) * cols + np.sin(angle) * rows) * 0.5 + 0.5
        ramp = np.clip(ramp, 0.0, 1.0)
        a = np.asarray(color_a)[:, None, None]
        b = np.asarray(color_b)[:, None, None]
        image = a + (b - a) * ramp[None]

        label = np.zeros((self.height, self.width), dtype=np.int64)
        for shape in shapes:
            mask = render_shape_mask(shape, self.height, self.width)
            image[:, mask] = np.asarray(class_color(shape.class_id))[:, None]
            label[mask] = shape.class_id

        noise_rng = numpy_rng([self.seed, SPLIT_KEYS[self.split], index, 1])
        image = image + noise_rng.normal(0.0, NOISE_STD, size=image.shape)
        image = np.clip(image, 0.0, 1.0).astype(np.float32)
        return torch.from_numpy(image), torch.from_numpy(label)

    def load(self, index: int) -> SampleRecord:
        sample_id = self.sample_id(index)
        if self.cache:
            cache_key = f"{self.cache_namespace}/{sample_id}"
            cached = get_sample_from_cache(cache_key)
            if cached is None:
                cached = self._render(index)
                save_sample_to_cache(cache_key, *cached)
            image, label = cached
        else:
            image, label = self._render(index)
        return SampleRecord(image=image, label=label, id=sample_id)


def synth_shapes(
    n_images: int,
    height: int = DEFAULT_HEIGHT,
    width: int = DEFAULT_WIDTH,
    num_classes: int = DEFAULT_NUM_CLASSES,
    seed: int = 0,
    split: str = "train",
    cache: bool = False,
) -> SyntheticShapes:
    return SyntheticShapes(n_images, height, width, num_classes, seed, split=split, cache=cache)
