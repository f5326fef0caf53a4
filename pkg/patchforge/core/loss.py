"""
Adversarial loss over the correctly classified pixel set.

L_x is the mean cross-entropy over pixels the model still gets right, excluding the patch
region and ignore-labelled pixels. The set is recomputed from every forward pass and treated as
a constant within a gradient step.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F

from patchforge.core.errors import EmptyBatch, ShapeMismatch
from patchforge.core.patch import Region

logger = logging.getLogger(__name__)


@dataclass
class CorrectnessMask:
    mask: torch.Tensor
    count: int
    excluded: torch.Tensor

    @property
    def incorrect(self) -> torch.Tensor:
        """Pixels that are labelled, outside the patch, and misclassified."""
        return ~self.mask & ~self.excluded


def _check_shapes(logits: torch.Tensor, label: torch.Tensor) -> None:
    if logits.dim() != 3 or label.dim() != 2 or tuple(logits.shape[1:]) != tuple(label.shape):
        raise ShapeMismatch(
            f"logits [C, H, W] and label [H, W] must agree, got {list(logits.shape)} / {list(label.shape)}"
        )


def correctness_mask(
    logits: torch.Tensor,
    label: torch.Tensor,
    patch_region: Optional[Region],
    ignore_index: int,
) -> CorrectnessMask:
    """Pixels predicted correctly, outside the patch, with a ground-truth label."""
    _check_shapes(logits, label)
    height, width = label.shape
    with torch.no_grad():
        # torch.argmax returns the first maximal index, so ties go to the lowest class
        pred = logits.detach().argmax(dim=0)
        excluded = label == ignore_index
        if patch_region is not None:
            excluded = excluded | patch_region.mask(height, width).to(label.device)
        mask = (pred == label) & ~excluded
    return CorrectnessMask(mask=mask, count=int(mask.sum().item()), excluded=excluded)


def masked_cross_entropy(
    logits: torch.Tensor,
    label: torch.Tensor,
    cmask: CorrectnessMask,
) -> torch.Tensor:
    """Mean of -log softmax(logits)[label] over the mask; exactly 0 when the mask is empty."""
    _check_shapes(logits, label)
    if tuple(cmask.mask.shape) != tuple(label.shape):
        raise ShapeMismatch(f"mask {list(cmask.mask.shape)} does not match label {list(label.shape)}")
    if cmask.count == 0:
        # keeps the graph connected so the image contributes a zero gradient
        return logits.sum() * 0.0
    log_probs = F.log_softmax(logits, dim=0)
    safe_label = torch.where(cmask.mask, label, torch.zeros_like(label)).to(torch.int64)
    picked = log_probs.gather(0, safe_label[None])[0]
    return -(picked[cmask.mask]).sum() / cmask.count


def batch_loss(per_image_losses: Sequence[torch.Tensor]) -> torch.Tensor:
    """L = (1/n) sum_i L_{x_i}."""
    if len(per_image_losses) == 0:
        raise EmptyBatch("cannot average an empty batch of losses")
    losses = [torch.as_tensor(value) for value in per_image_losses]
    return torch.stack(losses).sum() / len(losses)


def attack_loss(
    logits: torch.Tensor,
    labels: torch.Tensor,
    patch_region: Optional[Region],
    ignore_index: int,
) -> Tuple[torch.Tensor, List[CorrectnessMask]]:
    """
    Batch adversarial loss for logits [B, C, H, W] and labels [B, H, W].

    Returns:
        (scalar loss, the per-image correctness masks it was computed over)
    """
    if logits.dim() != 4 or labels.dim() != 3 or logits.shape[0] != labels.shape[0]:
        raise ShapeMismatch(f"expected [B, C, H, W] logits and [B, H, W] labels, got {list(logits.shape)} / {list(labels.shape)}")
    masks = []
    losses = []
    for logit, label in zip(logits, labels):
        cmask = correctness_mask(logit, label, patch_region, ignore_index)
        masks.append(cmask)
        losses.append(masked_cross_entropy(logit, label, cmask))
    return batch_loss(losses), masks
