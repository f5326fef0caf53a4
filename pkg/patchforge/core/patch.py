"""
The adversarial patch and the operator that pastes it into an image.

Pasting overwrites the region with the patch values and leaves every other pixel untouched.
"""
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, Optional, Tuple, Union

import torch

from patchforge.core.errors import DomainError, PatchTooLarge, ShapeMismatch

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
RANDOM_SOURCE = "random"


def utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class PatchMeta:
    """Training provenance stored next to the patch values."""
    source_model: str = RANDOM_SOURCE
    train_epochs: int = 0
    step_size: float = 0.0
    seed: int = 0
    created_utc: str = field(default_factory=utc_now)
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": self.format_version,
            "source_model": self.source_model,
            "train_epochs": self.train_epochs,
            "step_size": self.step_size,
            "seed": self.seed,
            "created_utc": self.created_utc,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PatchMeta":
        return cls(
            source_model=str(data["source_model"]),
            train_epochs=int(data["train_epochs"]),
            step_size=float(data["step_size"]),
            seed=int(data["seed"]),
            created_utc=str(data["created_utc"]),
            format_version=int(data["format_version"]),
        )


@dataclass(frozen=True, eq=False)
class Patch:
    """
    Adversarial pixel block delta, shape [3, h, w], entries in [0, 1].

    Values are cloned on construction; treat them as read-only.
    """
    values: torch.Tensor
    meta: PatchMeta = field(default_factory=PatchMeta)

    def __post_init__(self):
        values = self.values
        if not isinstance(values, torch.Tensor):
            values = torch.as_tensor(values, dtype=torch.float32)
        if values.dim() != 3 or values.shape[0] != 3:
            raise ShapeMismatch(f"patch values must have shape [3, h, w], got {list(values.shape)}")
        if values.shape[1] < 1 or values.shape[2] < 1:
            raise ShapeMismatch(f"patch must be at least 1x1, got {list(values.shape)}")
        if not torch.isfinite(values).all() or values.min() < 0 or values.max() > 1:
            raise DomainError("patch values must lie in [0, 1]; use clip_patch first")
        object.__setattr__(self, "values", values.detach().clone())

    @property
    def height(self) -> int:
        return int(self.values.shape[1])

    @property
    def width(self) -> int:
        return int(self.values.shape[2])

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(self.values.shape)

    def with_values(self, values: torch.Tensor) -> "Patch":
        """Same provenance, new pixels."""
        if tuple(values.shape) != self.shape:
            raise ShapeMismatch(f"cannot replace {list(self.shape)} patch values with {list(values.shape)}")
        return Patch(values=values, meta=self.meta)

    def with_meta(self, **changes) -> "Patch":
        return Patch(values=self.values, meta=replace(self.meta, **changes))


@dataclass(frozen=True)
class Region:
    """Half-open pixel rectangle [row0, row1) x [col0, col1)."""
    row0: int
    col0: int
    row1: int
    col1: int

    @property
    def height(self) -> int:
        return self.row1 - self.row0

    @property
    def width(self) -> int:
        return self.col1 - self.col0

    @property
    def area(self) -> int:
        return self.height * self.width

    def slices(self) -> Tuple[slice, slice]:
        return slice(self.row0, self.row1), slice(self.col0, self.col1)

    def mask(self, height: int, width: int) -> torch.Tensor:
        """Boolean [height, width] mask, true inside the region."""
        mask = torch.zeros(height, width, dtype=torch.bool)
        mask[self.slices()] = True
        return mask

    def as_tuple(self) -> Tuple[int, int, int, int]:
        return self.row0, self.col0, self.row1, self.col1


class PlacementMode(str, Enum):
    CENTER = "center"


@dataclass(frozen=True)
class PlacementSpec:
    mode: PlacementMode = PlacementMode.CENTER

    def resolved_region(self, image_h: int, image_w: int, patch_h: int, patch_w: int) -> Region:
        if patch_h > image_h or patch_w > image_w:
            raise PatchTooLarge(f"patch {patch_h}x{patch_w} does not fit image {image_h}x{image_w}")
        row0 = (image_h - patch_h) // 2
        col0 = (image_w - patch_w) // 2
        return Region(row0, col0, row0 + patch_h, col0 + patch_w)


CENTER = PlacementSpec(PlacementMode.CENTER)


def check_unit_range(image: torch.Tensor, name: str = "image") -> None:
    if image.numel() and (image.min() < 0 or image.max() > 1):
        raise DomainError(f"{name} values must lie in [0, 1]")


def apply_patch(
    image: torch.Tensor,
    patch: Patch,
    placement: PlacementSpec = CENTER,
) -> Tuple[torch.Tensor, Region]:
    """
    Paste the patch into an image.

    Args:
        image: [3, H, W] or a batch [B, 3, H, W] in unit RGB
        patch: the patch to paste
        placement: where to paste it

    Returns:
        (attacked copy of the image, region the patch occupies)
    """
    if image.dim() not in (3, 4) or image.shape[-3] != 3:
        raise ShapeMismatch(f"expected [3, H, W] or [B, 3, H, W] image, got {list(image.shape)}")
    check_unit_range(image)
    height, width = int(image.shape[-2]), int(image.shape[-1])
    region = placement.resolved_region(height, width, patch.height, patch.width)
    attacked = image.detach().clone()
    rows, cols = region.slices()
    attacked[..., rows, cols] = patch.values.to(dtype=attacked.dtype)
    return attacked, region


def extract_region(image: torch.Tensor, region: Region) -> torch.Tensor:
    rows, cols = region.slices()
    return image[..., rows, cols]


def clip_patch(patch: Union[Patch, torch.Tensor], meta: Optional[PatchMeta] = None) -> Patch:
    """
    Clamp every entry into [0, 1].

    Accepts raw values (e.g. straight out of an ascent step) as well as a Patch.
    """
    if isinstance(patch, Patch):
        values, meta = patch.values, meta or patch.meta
    else:
        values = patch
    clipped = torch.nan_to_num(values.detach(), nan=0.0).clamp(0.0, 1.0)
    return Patch(values=clipped, meta=meta or PatchMeta())


def random_patch(height: int, width: int, seed: int) -> Patch:
    """Uniform noise patch, the baseline attack. Deterministic for a fixed seed."""
    if height < 1 or width < 1:
        raise ShapeMismatch(f"patch must be at least 1x1, got {height}x{width}")
    generator = torch.Generator()
    generator.manual_seed(seed)
    values = torch.rand((3, height, width), generator=generator, dtype=torch.float32)
    return Patch(values=values, meta=PatchMeta(source_model=RANDOM_SOURCE, seed=seed))
