"""
EOT patch training: sign-gradient ascent on the correctly-classified-pixel loss, with one
transform draw per image per batch and the patch pasted after the transform.
"""
import math
import time
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Tuple

import torch
from tqdm import tqdm

from patchforge.core.errors import EmptyDataset, ModelMutated, NonFiniteGradient, ShapeMismatch
from patchforge.core.loss import attack_loss
from patchforge.core.patch import Patch, apply_patch, clip_patch, random_patch
from patchforge.core.runtime import debug_enabled, torch_generator
from patchforge.core.transforms import apply_transform, sample_transform
from patchforge.data.batching import batches
from patchforge.data.records import SegmentationDataset, seeded_subset
from patchforge.eval.suite import DecayLogger
from patchforge.models.schemas import EpochRecordPayload, TrainConfig
from patchforge.zoo.adapter import ModelAdapter

logger = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    wall_time_s: float
    eval_miou: Optional[float] = None
    per_class_iou: Optional[List[Optional[float]]] = None

    def to_dict(self) -> dict:
        return EpochRecordPayload(**asdict(self)).model_dump()

    @classmethod
    def from_dict(cls, data: dict) -> "EpochRecord":
        payload = EpochRecordPayload.model_validate(data)
        return cls(**payload.model_dump())


@dataclass
class TrainHistory:
    """One record per completed epoch."""
    records: List[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        if self.records and record.epoch != self.records[-1].epoch + 1:
            raise ValueError(f"epoch {record.epoch} does not follow epoch {self.records[-1].epoch}")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def to_list(self) -> List[dict]:
        return [record.to_dict() for record in self.records]

    @classmethod
    def from_list(cls, items: List[dict]) -> "TrainHistory":
        return cls(records=[EpochRecord.from_dict(item) for item in items])


# called after every completed epoch with (epoch, patch, record, history)
EpochCallback = Callable[[int, Patch, EpochRecord, TrainHistory], None]


def init_patch(cfg: TrainConfig, seed: Optional[int] = None) -> Patch:
    """Uniform random starting patch; the seed goes into its meta."""
    return random_patch(cfg.patch_size, cfg.patch_size, cfg.seed if seed is None else seed)


def ascent_step(patch: Patch, grad: torch.Tensor, step_size: float) -> Patch:
    """Move every patch value by step_size in the direction of its gradient sign, then clip to [0, 1]."""
    if tuple(grad.shape) != patch.shape:
        raise ShapeMismatch(f"gradient {list(grad.shape)} does not match patch {list(patch.shape)}")
    if not torch.isfinite(grad).all():
        raise NonFiniteGradient("patch gradient contains NaN or Inf")
    values = patch.values
    stepped = values + step_size * torch.sign(grad.detach().to(values.dtype))
    updated = clip_patch(stepped, meta=patch.meta)
    if debug_enabled():
        assert float(updated.values.min()) >= 0.0 and float(updated.values.max()) <= 1.0
    return updated


def transformed_batch(batch, cfg: TrainConfig, generator: torch.Generator) -> Tuple[torch.Tensor, torch.Tensor]:
    images, labels = [], []
    for record in batch:
        spec = sample_transform(generator, cfg.transform, record.height, record.width)
        image, label = apply_transform(record.image, record.label, spec, cfg.transform)
        images.append(image)
        labels.append(label)
    return torch.stack(images), torch.stack(labels)


def patch_gradient_step(
    adapter: ModelAdapter,
    patch: Patch,
    images: torch.Tensor,
    labels: torch.Tensor,
    step_size: float,
) -> Tuple[Patch, float, int]:
    """
    One ascent step on a batch of already transformed images.

    Returns:
        (updated patch, batch loss, correctly classified pixels counted over the batch)
    """
    attacked, region = apply_patch(images, patch)
    omega = []

    def loss_fn(logits: torch.Tensor) -> torch.Tensor:
        loss, masks = attack_loss(logits, labels, region, adapter.ignore_index)
        omega.append(sum(mask.count for mask in masks))
        return loss

    loss_value, grad = adapter.value_and_gradient(attacked, loss_fn)
    rows, cols = region.slices()
    patch_grad = grad[:, :, rows, cols].sum(dim=0)
    return ascent_step(patch, patch_grad, step_size), loss_value, omega[-1] if omega else 0


def train_patch(
    adapter: ModelAdapter,
    dataset: SegmentationDataset,
    cfg: TrainConfig,
    *,
    source_model: Optional[str] = None,
    initial_patch: Optional[Patch] = None,
    start_epoch: int = 0,
    history: Optional[TrainHistory] = None,
    decay: Optional[DecayLogger] = None,
    on_epoch_end: Optional[EpochCallback] = None,
    show_progress: bool = False,
) -> Tuple[Patch, TrainHistory]:
    """
    Train a patch against one model.

    Args:
        adapter: model in inference mode; its parameters must not change
        dataset: training split
        cfg: recipe (step size, epochs, batch size, patch size, transforms, seed)
        source_model: name stored in the patch meta (defaults to adapter.name)
        initial_patch / start_epoch / history: continue a run after `start_epoch` completed epochs
        decay: evaluator for per-epoch MIoU; defaults to a seeded `eval_subset` of the training split
        on_epoch_end: checkpoint hook
    """
    if len(dataset) == 0:
        raise EmptyDataset("cannot train a patch on an empty dataset")
    source_model = source_model or adapter.name
    checksum_before = adapter.parameter_checksum()
    cfg = cfg.model_copy(update={"transform": cfg.transform.with_pad_default(dataset.mean)})

    patch = initial_patch if initial_patch is not None else init_patch(cfg)
    history = history if history is not None else TrainHistory()
    if decay is None and cfg.eval_every > 0:
        decay = DecayLogger(adapter, seeded_subset(dataset, cfg.eval_subset, cfg.seed))
    if decay is not None and start_epoch == 0 and not decay.points:
        decay.log(0, patch)

    n_batches = math.ceil(len(dataset) / cfg.batch_size)
    logger.info(
        f"Training {cfg.patch_size}px patch against {adapter.name}: epochs {start_epoch + 1}..{cfg.epochs}, "
        f"{len(dataset)} images, batch {cfg.batch_size}, step {cfg.step_size}"
    )
    for epoch in range(start_epoch + 1, cfg.epochs + 1):
        started = time.monotonic()
        generator = torch_generator(cfg.seed, epoch)
        losses = []
        progress = tqdm(
            batches(dataset, cfg.batch_size, cfg.seed, epoch),
            total=n_batches,
            desc=f"patch vs {adapter.name} {epoch}/{cfg.epochs}",
            disable=not show_progress,
            leave=False,
        )
        for step, batch in enumerate(progress):
            images, labels = transformed_batch(batch, cfg, generator)
            patch, loss_value, omega = patch_gradient_step(adapter, patch, images, labels, cfg.step_size)
            losses.append(loss_value)
            logger.debug(f"epoch {epoch} step {step}: loss={loss_value:.4f} |omega|={omega}")

        patch = patch.with_meta(source_model=source_model, train_epochs=epoch, step_size=cfg.step_size, seed=cfg.seed)
        record = EpochRecord(
            epoch=epoch,
            mean_loss=sum(losses) / len(losses),
            wall_time_s=time.monotonic() - started,
        )
        if decay is not None and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            point = decay.log(epoch, patch)
            record.eval_miou = point.miou
            record.per_class_iou = point.per_class_iou
            record.wall_time_s = time.monotonic() - started
        history.append(record)
        logger.info(
            f"Epoch {epoch}/{cfg.epochs}: loss={record.mean_loss:.4f}"
            + (f" eval MIoU={record.eval_miou:.4f}" if record.eval_miou is not None else "")
            + f" ({record.wall_time_s:.1f}s)"
        )
        if on_epoch_end is not None:
            on_epoch_end(epoch, patch, record, history)

    if adapter.parameter_checksum() != checksum_before:
        raise ModelMutated(f"{adapter.name} parameters changed during patch training")
    return patch, history
