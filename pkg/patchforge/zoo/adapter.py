"""
The contract the attack uses to talk to a segmentation model.

Adapters take images in unit RGB and return logits at input resolution. Normalization,
stride padding, head selection and upsampling all happen inside the adapter.
"""
import hashlib
import logging
import threading
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Callable, Optional, Sequence, Tuple, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from patchforge.core.errors import NonFiniteLoss, ShapeMismatch

logger = logging.getLogger(__name__)

ScalarLossFn = Callable[[torch.Tensor], torch.Tensor]


class ModelAdapter(ABC):
    name: str
    num_classes: int
    ignore_index: int = 255
    family: str = "external"

    @abstractmethod
    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """images [B, 3, H, W] in unit RGB -> logits [B, C, H, W]."""

    @abstractmethod
    def value_and_gradient(self, images: torch.Tensor, scalar_loss_fn: ScalarLossFn) -> Tuple[float, torch.Tensor]:
        """Scalar loss of the logits and its gradient w.r.t. the input pixels."""

    @abstractmethod
    def set_inference_mode(self) -> None:
        """Freeze parameters and stochastic layers."""

    def input_gradient(self, images: torch.Tensor, scalar_loss_fn: ScalarLossFn) -> torch.Tensor:
        return self.value_and_gradient(images, scalar_loss_fn)[1]

    def predict(self, images: torch.Tensor) -> torch.Tensor:
        """Argmax class map [B, H, W]."""
        return self.forward(images).argmax(dim=1)

    def parameter_checksum(self) -> str:
        return ""

    def receptive_field_radius(self) -> Optional[int]:
        return None


def select_primary_head(output) -> torch.Tensor:
    """Multi-head networks return tuples/dicts; the semantic head comes first (or under 'out')."""
    if isinstance(output, torch.Tensor):
        return output
    if isinstance(output, dict):
        if "out" in output:
            return output["out"]
        return next(iter(output.values()))
    if isinstance(output, (list, tuple)):
        return output[0]
    logits = getattr(output, "logits", None)
    if isinstance(logits, torch.Tensor):
        return logits
    raise TypeError(f"cannot find logits in model output of type {type(output).__name__}")


class TorchSegmentationAdapter(ModelAdapter):
    """Wraps any torch segmentation module."""

    def __init__(
        self,
        module: nn.Module,
        name: str,
        num_classes: int,
        ignore_index: int = 255,
        mean: Sequence[float] = (0.0, 0.0, 0.0),
        std: Sequence[float] = (1.0, 1.0, 1.0),
        output_stride: int = 1,
        family: str = "external",
    ):
        self.module = module
        self.name = name
        self.num_classes = num_classes
        self.ignore_index = ignore_index
        self.mean = tuple(float(v) for v in mean)
        self.std = tuple(float(v) for v in std)
        self.output_stride = max(1, int(output_stride))
        self.family = family
        self._lock = threading.Lock()
        self.set_inference_mode()

    @property
    def dtype(self) -> torch.dtype:
        for parameter in self.module.parameters():
            return parameter.dtype
        return torch.float32

    def to(self, dtype: torch.dtype) -> "TorchSegmentationAdapter":
        self.module.to(dtype)
        return self

    def set_inference_mode(self) -> None:
        self.module.eval()
        for parameter in self.module.parameters():
            parameter.requires_grad_(False)

    def set_training_mode(self) -> None:
        self.module.train()
        for parameter in self.module.parameters():
            parameter.requires_grad_(True)

    def logits(self, images: torch.Tensor) -> torch.Tensor:
        """Differentiable forward pass: normalize, pad to stride, run, upsample, crop."""
        if images.dim() != 4 or images.shape[1] != 3:
            raise ShapeMismatch(f"expected [B, 3, H, W] images, got {list(images.shape)}")
        height, width = int(images.shape[2]), int(images.shape[3])
        dtype = self.dtype
        x = images.to(dtype)
        mean = torch.tensor(self.mean, dtype=dtype).view(1, 3, 1, 1)
        std = torch.tensor(self.std, dtype=dtype).view(1, 3, 1, 1)
        x = (x - mean) / std

        stride = self.output_stride
        pad_h = (-height) % stride
        pad_w = (-width) % stride
        if pad_h or pad_w:
            x = F.pad(x, (0, pad_w, 0, pad_h))

        out = select_primary_head(self.module(x))
        if tuple(out.shape[2:]) != tuple(x.shape[2:]):
            out = F.interpolate(out, size=x.shape[2:], mode="bilinear", align_corners=False)
        return out[:, :, :height, :width]

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return self.logits(images)

    def value_and_gradient(self, images: torch.Tensor, scalar_loss_fn: ScalarLossFn) -> Tuple[float, torch.Tensor]:
        with self._lock:
            x = images.detach().to(self.dtype).clone().requires_grad_(True)
            with torch.enable_grad():
                loss = torch.as_tensor(scalar_loss_fn(self.logits(x)))
            if loss.numel() != 1:
                raise ShapeMismatch(f"loss must be a scalar, got shape {list(loss.shape)}")
            if not torch.isfinite(loss).all():
                raise NonFiniteLoss(f"{self.name}: loss evaluated to {loss.item()}")
            if not loss.requires_grad:
                return float(loss.item()), torch.zeros_like(x)
            (grad,) = torch.autograd.grad(loss, x, allow_unused=True)
            if grad is None:
                grad = torch.zeros_like(x)
            return float(loss.detach().item()), grad.detach()

    def parameter_checksum(self) -> str:
        """sha256 over every parameter and buffer, in state_dict order."""
        digest = hashlib.sha256()
        for key, tensor in self.module.state_dict().items():
            digest.update(key.encode("utf-8"))
            digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
        return digest.hexdigest()

    def receptive_field_radius(self) -> Optional[int]:
        bound = getattr(self.module, "receptive_field_radius", None)
        return bound() if callable(bound) else None

    def save_weights(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(self.module.state_dict(), path)
        return path

    def load_weights(self, path: Union[str, Path]) -> "TorchSegmentationAdapter":
        state = torch.load(Path(path), map_location="cpu", weights_only=True)
        self.module.load_state_dict(state)
        self.set_inference_mode()
        logger.info(f"Loaded {self.name} weights from {path}")
        return self
