"""
Static figures for finished runs. Files only, no interactive backend.
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import torch  # noqa: E402

from patchforge.core.metrics import SpreadProfile  # noqa: E402
from patchforge.data.cityscapes import CITYSCAPES_PALETTE  # noqa: E402
from patchforge.models.schemas import DecayPayload  # noqa: E402

logger = logging.getLogger(__name__)

DROP_COLOR = "tab:green"
GAIN_COLOR = "tab:red"
DPI = 120


def _save(fig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    logger.info(f"Wrote figure {path}")
    return path


def plot_miou_decay(decays: Sequence[DecayPayload], path: Union[str, Path]) -> Path:
    """MIoU against epoch, one line per attacked model."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for decay in decays:
        epochs = [point.epoch for point in decay.points]
        values = [point.miou for point in decay.points]
        ax.plot(epochs, values, marker="o", markersize=3, label=decay.model)
    ax.set_xlabel("epoch")
    ax.set_ylabel("MIoU")
    ax.set_title("MIoU decay under patch training")
    ax.grid(alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_per_class_decay(decay: DecayPayload, path: Union[str, Path]) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    epochs = [point.epoch for point in decay.points]
    for c, name in enumerate(decay.class_names):
        # undefined IoU plots as a gap
        values = [np.nan if point.per_class_iou[c] is None else point.per_class_iou[c] for point in decay.points]
        ax.plot(epochs, values, label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("IoU")
    ax.set_title(f"Per-class IoU decay: {decay.model}")
    ax.grid(alpha=0.3)
    ax.legend(fontsize="small", ncol=2)
    return _save(fig, path)


def plot_transfer_drop_bars(
    row_labels: List[str],
    col_labels: List[str],
    values: List[List[float]],
    path: Union[str, Path],
    families: Optional[Dict[str, str]] = None,
) -> Path:
    """
    Drop vs the random baseline for every (patch, model) cell.

    Rows of `values` follow `row_labels`, the first being the baseline. Drops are green bars,
    increments (negative drops) red and hatched.
    """
    baseline = values[0]
    patches = row_labels[1:]
    families = families or {}
    n_models = len(col_labels)
    width = 0.8 / max(len(patches), 1)
    fig, ax = plt.subplots(figsize=(max(6, 1.6 * n_models * max(len(patches), 1)), 4))
    x = np.arange(n_models)
    for i, tag in enumerate(patches):
        drops = [baseline[j] - values[i + 1][j] for j in range(n_models)]
        colors = [DROP_COLOR if drop >= 0 else GAIN_COLOR for drop in drops]
        bars = ax.bar(x + (i - (len(patches) - 1) / 2) * width, drops, width, color=colors, edgecolor="black", linewidth=0.5)
        for bar, drop in zip(bars, drops):
            if drop < 0:
                bar.set_hatch("//")
            ax.annotate(tag, (bar.get_x() + bar.get_width() / 2, max(drop, 0)), ha="center", va="bottom", fontsize=7, rotation=90)
    ax.axhline(0, color="black", linewidth=0.8)
    ax.set_xticks(x)
    ax.set_xticklabels([f"{name}\n({families[name]})" if name in families else name for name in col_labels])
    ax.set_ylabel("MIoU drop vs random patch")
    ax.set_title("Patch transfer")
    return _save(fig, path)


def plot_spread_profiles(profiles: Dict[str, SpreadProfile], path: Union[str, Path]) -> Path:
    """Flip rate against Chebyshev distance from the patch, one line per (patch, model) label."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, profile in profiles.items():
        centers = [edge + (profile.bin_width - 1) / 2 for edge in profile.bin_edges[:-1]]
        ax.plot(centers, profile.flip_rate, label=f"{label} (far {profile.far_flip_ratio:.2f})")
    if profiles:
        radius = next(iter(profiles.values())).far_radius
        ax.axvline(radius, color="grey", linestyle="--", linewidth=0.8)
    ax.set_xlabel("distance from patch (px)")
    ax.set_ylabel("prediction flip rate")
    ax.set_title("Spatial spread of patch effect")
    ax.grid(alpha=0.3)
    ax.legend(fontsize="small")
    return _save(fig, path)


def colorize(mask: torch.Tensor, num_classes: int, ignore_index: int = 255) -> np.ndarray:
    values = mask.cpu().numpy()
    if num_classes == len(CITYSCAPES_PALETTE):
        palette = np.asarray(CITYSCAPES_PALETTE, dtype=np.float64) / 255.0
        rgb = palette[np.clip(values, 0, num_classes - 1)]
        rgb[values == ignore_index] = 0.0
        return rgb
    cmap = matplotlib.colormaps["tab20"].resampled(max(num_classes, 2))
    rgb = cmap(np.clip(values, 0, num_classes - 1))[..., :3]
    rgb[values == ignore_index] = 0.0
    return rgb


def save_prediction_panel(
    path: Union[str, Path],
    attacked: torch.Tensor,
    clean_pred: torch.Tensor,
    attacked_pred: torch.Tensor,
    num_classes: int,
    title: str = "",
) -> Path:
    fig, axes = plt.subplots(1, 3, figsize=(12, 3))
    panels = [
        (attacked.permute(1, 2, 0).clamp(0, 1).cpu().numpy(), "attacked image"),
        (colorize(clean_pred, num_classes), "clean prediction"),
        (colorize(attacked_pred, num_classes), "attacked prediction"),
    ]
    for ax, (image, name) in zip(axes, panels):
        ax.imshow(image)
        ax.set_title(name)
        ax.axis("off")
    if title:
        fig.suptitle(title)
    return _save(fig, path)
