"""
Desk-scale stand-ins for the two model families under attack: a small encoder-decoder CNN
with a bounded receptive field, and a patch-token transformer with global self-attention.
"""
import math
import logging
from typing import List, Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from patchforge.core.errors import ConfigError
from patchforge.models.schemas import ToyModelConfig, ToyModelKind
from patchforge.zoo.adapter import TorchSegmentationAdapter

logger = logging.getLogger(__name__)

TOY_MEAN = (0.5, 0.5, 0.5)
TOY_STD = (0.25, 0.25, 0.25)
OUTPUT_STRIDE = 8
TOKEN_SIZE = 8
ATTENTION_HEADS = 4


def conv_bn(in_channels: int, out_channels: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1, bias=False),
        nn.BatchNorm2d(out_channels),
        nn.ReLU(inplace=True),
    )


class TinyCNN(nn.Module):
    """Four encoder stages down to 1/8, two decoder stages back to 1/2 with one skip at 1/4, 1x1 classifier."""

    # (op, kernel, stride) in execution order along the deepest path; "up" doubles resolution
    LAYOUT: List[Tuple[str, int, int]] = [
        ("conv", 3, 1), ("conv", 3, 1),
        ("conv", 3, 2), ("conv", 3, 1),
        ("conv", 3, 2), ("conv", 3, 1),
        ("conv", 3, 2), ("conv", 3, 1),
        ("up", 0, 2), ("conv", 3, 1),
        ("up", 0, 2), ("conv", 3, 1),
        ("up", 0, 2),
    ]

    def __init__(self, num_classes: int, width: int = 16):
        super().__init__()
        w = width
        self.stage1 = nn.Sequential(conv_bn(3, w), conv_bn(w, w))
        self.stage2 = nn.Sequential(conv_bn(w, 2 * w, 2), conv_bn(2 * w, 2 * w))
        self.stage3 = nn.Sequential(conv_bn(2 * w, 4 * w, 2), conv_bn(4 * w, 4 * w))
        self.stage4 = nn.Sequential(conv_bn(4 * w, 4 * w, 2), conv_bn(4 * w, 4 * w))
        self.decode1 = conv_bn(8 * w, 2 * w)
        self.decode2 = conv_bn(2 * w, w)
        self.classifier = nn.Conv2d(w, num_classes, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        s1 = self.stage1(x)
        s2 = self.stage2(s1)
        s3 = self.stage3(s2)
        s4 = self.stage4(s3)
        d1 = F.interpolate(s4, size=s3.shape[2:], mode="bilinear", align_corners=False)
        d1 = self.decode1(torch.cat([d1, s3], dim=1))
        d2 = F.interpolate(d1, size=s2.shape[2:], mode="bilinear", align_corners=False)
        d2 = self.decode2(d2)
        return self.classifier(d2)

    @classmethod
    def receptive_field_radius(cls) -> int:
        """
        Conservative bound, in input pixels, on how far an input change can move a logit.

        Includes the adapter's final upsampling to input resolution.
        """
        radius, jump = 0.0, 1.0
        for op, kernel, stride in cls.LAYOUT:
            if op == "conv":
                radius += (kernel // 2) * jump + (stride - 1) * jump
                jump *= stride
            else:
                # bilinear reads the two nearest coarse samples
                radius += 2 * jump
                jump /= stride
        return int(math.ceil(radius))


def sincos_position_encoding(grid_h: int, grid_w: int, dim: int, dtype: torch.dtype) -> torch.Tensor:
    """Fixed 2D sin/cos encoding [grid_h * grid_w, dim]; works for any grid size."""
    quarter = dim // 4
    omega = 1.0 / (10000 ** (torch.arange(quarter, dtype=torch.float64) / max(quarter, 1)))
    rows = torch.arange(grid_h, dtype=torch.float64)[:, None] * omega[None]
    cols = torch.arange(grid_w, dtype=torch.float64)[:, None] * omega[None]
    row_enc = torch.cat([rows.sin(), rows.cos()], dim=1)
    col_enc = torch.cat([cols.sin(), cols.cos()], dim=1)
    grid = torch.cat(
        [row_enc[:, None, :].expand(grid_h, grid_w, -1), col_enc[None, :, :].expand(grid_h, grid_w, -1)],
        dim=2,
    )
    return grid.reshape(grid_h * grid_w, 4 * quarter).to(dtype)


class AttentionBlock(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, dropout=0.0, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, 2 * dim), nn.GELU(), nn.Linear(2 * dim, dim))

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        h = self.norm1(tokens)
        tokens = tokens + self.attn(h, h, h, need_weights=False)[0]
        return tokens + self.mlp(self.norm2(tokens))


class TinyAttention(nn.Module):
    """Non-overlapping 8x8 patch embedding, two self-attention blocks, per-token linear classifier."""

    def __init__(self, num_classes: int, width: int = 16, depth: int = 2):
        super().__init__()
        self.dim = 4 * width
        self.embed = nn.Conv2d(3, self.dim, TOKEN_SIZE, stride=TOKEN_SIZE)
        self.blocks = nn.ModuleList([AttentionBlock(self.dim, ATTENTION_HEADS) for _ in range(depth)])
        self.norm = nn.LayerNorm(self.dim)
        self.classifier = nn.Linear(self.dim, num_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        tokens = self.embed(x)
        batch, dim, grid_h, grid_w = tokens.shape
        tokens = tokens.flatten(2).transpose(1, 2)
        tokens = tokens + sincos_position_encoding(grid_h, grid_w, dim, tokens.dtype)[None]
        for block in self.blocks:
            tokens = block(tokens)
        logits = self.classifier(self.norm(tokens))
        return logits.transpose(1, 2).reshape(batch, -1, grid_h, grid_w)

    def receptive_field_radius(self) -> Optional[int]:
        return None


def build_toy_model(cfg: ToyModelConfig) -> TorchSegmentationAdapter:
    """Seeded construction of a toy adapter, in inference mode."""
    if cfg.num_classes < 2:
        raise ConfigError("toy models need at least 2 classes")
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        if cfg.kind == ToyModelKind.TINY_CNN:
            module, family = TinyCNN(cfg.num_classes, cfg.width), "cnn"
        elif cfg.kind == ToyModelKind.TINY_ATTENTION:
            module, family = TinyAttention(cfg.num_classes, cfg.width), "attention"
        else:
            raise ConfigError(f"unknown toy model kind '{cfg.kind}'")
    adapter = TorchSegmentationAdapter(
        module,
        name=cfg.kind.value,
        num_classes=cfg.num_classes,
        mean=TOY_MEAN,
        std=TOY_STD,
        output_stride=OUTPUT_STRIDE,
        family=family,
    )
    logger.debug(f"Built {cfg.kind.value} (width={cfg.width}, seed={cfg.seed}) checksum={adapter.parameter_checksum()[:12]}")
    return adapter
