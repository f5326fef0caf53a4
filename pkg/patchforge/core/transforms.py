"""
Sampling and application of the transformation distribution T.

Order of operations is scale -> flip -> pad -> crop. Content is anchored at the top-left of the
padded frame; padding goes on the bottom/right.
"""
import math
import logging
from dataclasses import dataclass
from typing import Tuple

import torch
import torch.nn.functional as F

from patchforge.core.errors import ConfigError, InvalidSpec, ShapeMismatch
from patchforge.models.schemas import TransformConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TransformSpec:
    """One draw t ~ T."""
    scale: float
    flip: bool
    crop_row0: int
    crop_col0: int


def scaled_size(size: int, scale: float) -> int:
    """Round-half-up resize target, never below one pixel."""
    return max(1, int(math.floor(size * scale + 0.5)))


def padded_shape(image_h: int, image_w: int, scale: float, crop_size: int) -> Tuple[int, int]:
    return max(scaled_size(image_h, scale), crop_size), max(scaled_size(image_w, scale), crop_size)


def identity_spec() -> TransformSpec:
    return TransformSpec(scale=1.0, flip=False, crop_row0=0, crop_col0=0)


def sample_transform(
    rng: torch.Generator,
    cfg: TransformConfig,
    image_h: int,
    image_w: int,
) -> TransformSpec:
    """
    Draw scale ~ U[scale_min, scale_max], flip ~ Bernoulli(flip_prob) and a uniform crop origin.

    Exactly four values are consumed from `rng` per call, so streams stay aligned.
    """
    if image_h < 1 or image_w < 1:
        raise ShapeMismatch(f"image must be at least 1x1, got {image_h}x{image_w}")
    draws = torch.rand(4, generator=rng, dtype=torch.float64).tolist()
    if cfg.scale_min == cfg.scale_max:
        scale = float(cfg.scale_min)
    else:
        scale = cfg.scale_min + (cfg.scale_max - cfg.scale_min) * draws[0]
    flip = draws[1] < cfg.flip_prob
    padded_h, padded_w = padded_shape(image_h, image_w, scale, cfg.crop_size)
    max_row0 = padded_h - cfg.crop_size
    max_col0 = padded_w - cfg.crop_size
    crop_row0 = min(int(draws[2] * (max_row0 + 1)), max_row0)
    crop_col0 = min(int(draws[3] * (max_col0 + 1)), max_col0)
    return TransformSpec(scale=scale, flip=flip, crop_row0=crop_row0, crop_col0=crop_col0)


def _resize(image: torch.Tensor, label: torch.Tensor, height: int, width: int) -> Tuple[torch.Tensor, torch.Tensor]:
    image = F.interpolate(image[None], size=(height, width), mode="bilinear", align_corners=False)[0]
    image = image.clamp(0.0, 1.0)
    # nearest keeps labels categorical
    label = F.interpolate(label[None, None].to(torch.float32), size=(height, width), mode="nearest")[0, 0]
    return image, label.to(torch.int64)


def apply_transform(
    image: torch.Tensor,
    label: torch.Tensor,
    spec: TransformSpec,
    cfg: TransformConfig,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Apply one transformation draw to an image/label pair.

    Args:
        image: [3, H, W] in unit RGB
        label: [H, W] integer mask
        spec: the draw
        cfg: supplies crop size and pad values

    Returns:
        (image [3, S, S], label [S, S]) with S = cfg.crop_size
    """
    if image.dim() != 3 or image.shape[0] != 3 or label.dim() != 2:
        raise ShapeMismatch(f"expected [3, H, W] image and [H, W] label, got {list(image.shape)} / {list(label.shape)}")
    if tuple(image.shape[1:]) != tuple(label.shape):
        raise ShapeMismatch(f"image {list(image.shape[1:])} and label {list(label.shape)} sizes differ")

    height, width = int(label.shape[0]), int(label.shape[1])
    crop = cfg.crop_size
    label = label.to(torch.int64)

    if spec.scale != 1.0:
        new_h, new_w = scaled_size(height, spec.scale), scaled_size(width, spec.scale)
        if (new_h, new_w) != (height, width):
            image, label = _resize(image, label, new_h, new_w)
            height, width = new_h, new_w

    if spec.flip:
        image = torch.flip(image, dims=[-1])
        label = torch.flip(label, dims=[-1])

    padded_h, padded_w = max(height, crop), max(width, crop)
    if (padded_h, padded_w) != (height, width):
        if cfg.pad_image_value is None:
            raise ConfigError("pad_image_value is unset; fill it with TransformConfig.with_pad_default(dataset.mean)")
        pad_value = torch.tensor(cfg.pad_image_value, dtype=image.dtype).view(3, 1, 1)
        padded_image = pad_value.expand(3, padded_h, padded_w).clone()
        padded_image[:, :height, :width] = image
        padded_label = torch.full((padded_h, padded_w), cfg.pad_label_value, dtype=torch.int64)
        padded_label[:height, :width] = label
        image, label = padded_image, padded_label

    row0, col0 = spec.crop_row0, spec.crop_col0
    if row0 < 0 or col0 < 0 or row0 + crop > padded_h or col0 + crop > padded_w:
        raise InvalidSpec(
            f"crop window ({row0}, {col0}) size {crop} exceeds padded image {padded_h}x{padded_w}"
        )
    image = image[:, row0:row0 + crop, col0:col0 + crop]
    label = label[row0:row0 + crop, col0:col0 + crop]
    return image.contiguous(), label.contiguous()
