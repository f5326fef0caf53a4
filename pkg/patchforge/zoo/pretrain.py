import math
import time
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import torch
import torch.nn.functional as F
from tqdm import tqdm

from patchforge.core.errors import DivergenceError, EmptyDataset
from patchforge.core.metrics import ConfusionMatrix, iou_per_class, miou
from patchforge.data.batching import batches
from patchforge.data.records import SegmentationDataset, stack_records
from patchforge.zoo.adapter import TorchSegmentationAdapter

logger = logging.getLogger(__name__)


@dataclass
class PretrainResult:
    adapter: TorchSegmentationAdapter
    val_miou: float
    per_class_iou: List[Optional[float]]
    epoch_losses: List[float] = field(default_factory=list)


def clean_confusion(adapter: TorchSegmentationAdapter, dataset: SegmentationDataset) -> ConfusionMatrix:
    """Dataset-level confusion matrix of unattacked predictions."""
    cm = ConfusionMatrix(adapter.num_classes)
    for record in dataset:
        pred = adapter.predict(record.image[None])[0]
        cm.update(pred, record.label, None, dataset.ignore_index)
    return cm


def pretrain_toy(
    adapter: TorchSegmentationAdapter,
    train: SegmentationDataset,
    val: SegmentationDataset,
    epochs: int,
    lr: float,
    seed: int,
    batch_size: int = 8,
    show_progress: bool = False,
) -> PretrainResult:
    """
    Per-pixel cross-entropy training of a toy model, then clean val MIoU.

    The adapter is returned in inference mode.
    """
    if len(train) == 0 or len(val) == 0:
        raise EmptyDataset("pretraining needs non-empty train and val splits")

    epoch_losses: List[float] = []
    if epochs > 0:
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            adapter.set_training_mode()
            optimizer = torch.optim.Adam(adapter.module.parameters(), lr=lr)
            try:
                for epoch in range(1, epochs + 1):
                    started = time.monotonic()
                    total, steps = 0.0, 0
                    progress = tqdm(
                        batches(train, batch_size, seed, epoch),
                        total=math.ceil(len(train) / batch_size),
                        desc=f"pretrain {adapter.name} {epoch}/{epochs}",
                        disable=not show_progress,
                        leave=False,
                    )
                    for batch in progress:
                        images, labels = stack_records(batch)
                        logits = adapter.logits(images)
                        loss = F.cross_entropy(logits, labels, ignore_index=train.ignore_index)
                        if not torch.isfinite(loss):
                            raise DivergenceError(f"{adapter.name}: loss became {loss.item()} in epoch {epoch}")
                        optimizer.zero_grad()
                        loss.backward()
                        optimizer.step()
                        total += float(loss.item())
                        steps += 1
                    epoch_losses.append(total / max(steps, 1))
                    logger.info(
                        f"Pretrain {adapter.name} epoch {epoch}/{epochs}: "
                        f"loss={epoch_losses[-1]:.4f} ({time.monotonic() - started:.1f}s)"
                    )
            finally:
                adapter.set_inference_mode()

    cm = clean_confusion(adapter, val)
    val_miou = miou(cm)
    logger.info(f"Pretrained {adapter.name}: val MIoU={val_miou:.4f}")
    return PretrainResult(adapter=adapter, val_miou=val_miou, per_class_iou=iou_per_class(cm), epoch_losses=epoch_losses)
