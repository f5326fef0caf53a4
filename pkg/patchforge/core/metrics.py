"""
Confusion-matrix IoU metrics and the spatial spread profile of patch effects.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import torch

from patchforge.core.errors import ClassIdOutOfRange, NoDefinedClasses, ShapeMismatch
from patchforge.core.patch import Region

logger = logging.getLogger(__name__)


class ConfusionMatrix:
    """counts[g][p] = number of pixels with ground truth g predicted as p."""

    def __init__(self, num_classes: int, counts: Optional[torch.Tensor] = None):
        if num_classes < 1:
            raise ValueError("num_classes must be positive")
        self.num_classes = num_classes
        if counts is None:
            counts = torch.zeros(num_classes, num_classes, dtype=torch.int64)
        elif tuple(counts.shape) != (num_classes, num_classes):
            raise ShapeMismatch(f"counts must be {num_classes}x{num_classes}, got {list(counts.shape)}")
        self.counts = counts.to(torch.int64).clone()

    @property
    def total(self) -> int:
        return int(self.counts.sum().item())

    def update(
        self,
        pred: torch.Tensor,
        label: torch.Tensor,
        exclude_region: Optional[Region] = None,
        ignore_index: int = 255,
    ) -> "ConfusionMatrix":
        if pred.dim() != 2 or tuple(pred.shape) != tuple(label.shape):
            raise ShapeMismatch(f"pred {list(pred.shape)} and label {list(label.shape)} must be equal [H, W]")
        pred = pred.to(torch.int64).cpu()
        label = label.to(torch.int64).cpu()
        valid = label != ignore_index
        if exclude_region is not None:
            valid &= ~exclude_region.mask(*label.shape)
        gt = label[valid]
        pr = pred[valid]
        if gt.numel() == 0:
            return self
        C = self.num_classes
        if gt.min() < 0 or gt.max() >= C:
            raise ClassIdOutOfRange(f"label ids must lie in [0, {C}) or equal {ignore_index}")
        if pr.min() < 0 or pr.max() >= C:
            raise ClassIdOutOfRange(f"predicted ids must lie in [0, {C})")
        self.counts += torch.bincount(gt * C + pr, minlength=C * C).view(C, C)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ShapeMismatch(f"cannot merge {self.num_classes}- and {other.num_classes}-class matrices")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)

    __add__ = merge

    def copy(self) -> "ConfusionMatrix":
        return ConfusionMatrix(self.num_classes, self.counts)

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfusionMatrix) and torch.equal(self.counts, other.counts)

    def __repr__(self):
        return f"ConfusionMatrix(num_classes={self.num_classes}, total={self.total})"


def update_confusion(
    cm: ConfusionMatrix,
    pred: torch.Tensor,
    label: torch.Tensor,
    exclude_region: Optional[Region] = None,
    ignore_index: int = 255,
) -> ConfusionMatrix:
    return cm.update(pred, label, exclude_region, ignore_index)


def iou_per_class(cm: ConfusionMatrix) -> List[Optional[float]]:
    """IoU_c = tp / (row + col - tp); None where the union is empty."""
    counts = cm.counts
    tp = counts.diagonal()
    union = counts.sum(dim=1) + counts.sum(dim=0) - tp
    ious: List[Optional[float]] = []
    for inter, uni in zip(tp.tolist(), union.tolist()):
        ious.append(inter / uni if uni > 0 else None)
    return ious


def miou(cm: ConfusionMatrix) -> float:
    """Mean over defined per-class IoUs."""
    defined = [value for value in iou_per_class(cm) if value is not None]
    if not defined:
        raise NoDefinedClasses("no class has a non-empty union")
    return sum(defined) / len(defined)


def chebyshev_distance_map(height: int, width: int, region: Region) -> torch.Tensor:
    """Chessboard distance of every pixel to the nearest region pixel (0 inside the region)."""
    rows = torch.arange(height)
    cols = torch.arange(width)
    drow = torch.clamp(torch.maximum(region.row0 - rows, rows - (region.row1 - 1)), min=0)
    dcol = torch.clamp(torch.maximum(region.col0 - cols, cols - (region.col1 - 1)), min=0)
    return torch.maximum(drow[:, None], dcol[None, :])


@dataclass
class SpreadProfile:
    """
    Flip rate of predictions as a function of distance from the patch.

    Bin k covers distances [bin_edges[k], bin_edges[k+1]).
    """
    bin_width: int
    far_radius: int
    bin_edges: List[int] = field(default_factory=list)
    pixel_counts: List[int] = field(default_factory=list)
    flip_counts: List[int] = field(default_factory=list)
    far_flips: int = 0

    @property
    def flip_rate(self) -> List[float]:
        return [f / n if n else 0.0 for f, n in zip(self.flip_counts, self.pixel_counts)]

    @property
    def total_flips(self) -> int:
        return sum(self.flip_counts)

    @property
    def far_flip_ratio(self) -> float:
        total = self.total_flips
        return self.far_flips / total if total else 0.0

    def merge(self, other: "SpreadProfile") -> "SpreadProfile":
        if (self.bin_width, self.far_radius) != (other.bin_width, other.far_radius):
            raise ShapeMismatch("spread profiles with different binning cannot be merged")
        size = max(len(self.pixel_counts), len(other.pixel_counts))

        def padded(values: List[int]) -> List[int]:
            return values + [0] * (size - len(values))

        pixels = [a + b for a, b in zip(padded(self.pixel_counts), padded(other.pixel_counts))]
        flips = [a + b for a, b in zip(padded(self.flip_counts), padded(other.flip_counts))]
        return SpreadProfile(
            bin_width=self.bin_width,
            far_radius=self.far_radius,
            bin_edges=[1 + k * self.bin_width for k in range(size + 1)],
            pixel_counts=pixels,
            flip_counts=flips,
            far_flips=self.far_flips + other.far_flips,
        )

    def to_dict(self) -> Dict[str, object]:
        return {
            "bin_edges": list(self.bin_edges),
            "flip_rate": self.flip_rate,
            "pixel_counts": list(self.pixel_counts),
            "flip_counts": list(self.flip_counts),
            "far_radius": self.far_radius,
            "far_flip_ratio": self.far_flip_ratio,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "SpreadProfile":
        edges = list(data["bin_edges"])
        bin_width = edges[1] - edges[0] if len(edges) > 1 else 1
        pixel_counts = list(data["pixel_counts"])
        flip_counts = list(data["flip_counts"])
        far_flips = int(round(float(data["far_flip_ratio"]) * sum(flip_counts)))
        return cls(
            bin_width=bin_width,
            far_radius=int(data["far_radius"]),
            bin_edges=edges,
            pixel_counts=pixel_counts,
            flip_counts=flip_counts,
            far_flips=far_flips,
        )


def spread_profile(
    pred_clean: torch.Tensor,
    pred_attacked: torch.Tensor,
    patch_region: Region,
    bin_width: int,
    far_radius: Optional[int] = None,
) -> SpreadProfile:
    """
    Bin off-patch prediction flips by Chebyshev distance to the patch rectangle.

    Args:
        pred_clean: [H, W] predictions without the patch
        pred_attacked: [H, W] predictions with the patch
        patch_region: the pasted rectangle
        bin_width: distance bin width in pixels
        far_radius: r*; flips at distance > r* count as far (default 2x the longer patch side)
    """
    if pred_clean.dim() != 2 or tuple(pred_clean.shape) != tuple(pred_attacked.shape):
        raise ShapeMismatch(f"predictions must be equal [H, W], got {list(pred_clean.shape)} / {list(pred_attacked.shape)}")
    if bin_width < 1:
        raise ValueError("bin_width must be positive")
    height, width = pred_clean.shape
    if patch_region.row0 < 0 or patch_region.col0 < 0 or patch_region.row1 > height or patch_region.col1 > width:
        raise ShapeMismatch(f"patch region {patch_region.as_tuple()} lies outside a {height}x{width} image")
    if far_radius is None:
        far_radius = 2 * max(patch_region.height, patch_region.width)

    distance = chebyshev_distance_map(height, width, patch_region)
    off_patch = distance > 0
    flipped = (pred_clean.cpu() != pred_attacked.cpu()) & off_patch
    max_distance = int(distance.max().item())
    n_bins = max(0, (max_distance - 1) // bin_width + 1) if max_distance > 0 else 0

    bin_index = (distance[off_patch] - 1) // bin_width
    pixel_counts = torch.bincount(bin_index, minlength=n_bins) if n_bins else torch.zeros(0, dtype=torch.int64)
    flip_counts = (
        torch.bincount((distance[flipped] - 1) // bin_width, minlength=n_bins)
        if n_bins else torch.zeros(0, dtype=torch.int64)
    )
    far_flips = int((flipped & (distance > far_radius)).sum().item())
    return SpreadProfile(
        bin_width=bin_width,
        far_radius=far_radius,
        bin_edges=[1 + k * bin_width for k in range(n_bins + 1)],
        pixel_counts=pixel_counts.tolist(),
        flip_counts=flip_counts.tolist(),
        far_flips=far_flips,
    )
