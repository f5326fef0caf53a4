import logging
from argparse import Namespace
from pathlib import Path
from typing import Optional

from patchforge.cli.commands.common import build_model, open_split
from patchforge.core.errors import ConfigError
from patchforge.core.patch import Patch
from patchforge.core.trainer import EpochRecord, TrainHistory, train_patch
from patchforge.data.records import seeded_subset
from patchforge.eval.suite import DecayLogger, DecayPoint
from patchforge.models.schemas import DecayPayload, DecayPointPayload, RunConfig, TrainConfig
from patchforge.store.artifacts import (
    CHECKPOINT_TAG,
    DECAY_FILE,
    HISTORY_FILE,
    load_decay,
    load_history,
    load_patch,
    patch_dir,
    save_history,
    save_patch,
    save_payload,
)
from patchforge.store.rundir import get_run_context

logger = logging.getLogger(__name__)


def decay_payload(model: str, class_names, points) -> DecayPayload:
    return DecayPayload(
        model=model,
        class_names=list(class_names),
        points=[DecayPointPayload(epoch=p.epoch, miou=p.miou, per_class_iou=p.per_class_iou) for p in points],
    )


def load_resume_state(config: RunConfig, cfg: TrainConfig, decay: Optional[DecayLogger]):
    """Checkpoint, epoch and history to continue from; read before the run directory is touched."""
    root = Path(config.output_dir)
    checkpoint_path = patch_dir(root, CHECKPOINT_TAG)
    if not checkpoint_path.is_dir():
        raise ConfigError(f"--resume given but {checkpoint_path} does not exist")
    initial_patch = load_patch(checkpoint_path)
    start_epoch = initial_patch.meta.train_epochs
    if initial_patch.shape != (3, cfg.patch_size, cfg.patch_size) or initial_patch.meta.seed != cfg.seed:
        raise ConfigError(f"checkpoint {checkpoint_path} was made with a different patch size or seed")
    history = TrainHistory.from_list(load_history(root / HISTORY_FILE)[:start_epoch])
    if decay is not None and (root / DECAY_FILE).is_file():
        restored = load_decay(root / DECAY_FILE)
        decay.points = [
            DecayPoint(epoch=p.epoch, miou=p.miou, per_class_iou=p.per_class_iou)
            for p in restored.points
            if p.epoch <= start_epoch
        ]
    return initial_patch, start_epoch, history


def cmd_train_patch(args: Namespace, config: RunConfig) -> int:
    """Train a patch; writes `<tag>.apf/`, history.json and decay.json, checkpointing every epoch."""
    cfg = config.train_config()
    dataset = open_split(config, "train")
    adapter = build_model(config)
    tag = config.tag or adapter.name
    subset = seeded_subset(dataset, cfg.eval_subset, cfg.seed)
    decay = DecayLogger(adapter, subset) if cfg.eval_every > 0 else None

    initial_patch, start_epoch, history = None, 0, None
    if args.resume:
        initial_patch, start_epoch, history = load_resume_state(config, cfg, decay)
        logger.info(f"Resuming {tag} after epoch {start_epoch}")

    with get_run_context(config.output_dir, config) as run:
        checkpoint_path = patch_dir(run.root, CHECKPOINT_TAG)

        def checkpoint(epoch: int, patch: Patch, record: EpochRecord, history: TrainHistory) -> None:
            save_patch(patch, checkpoint_path)
            save_history(history.to_list(), run.path(HISTORY_FILE))
            if decay is not None:
                save_payload(decay_payload(adapter.name, subset.class_names, decay.points), run.path(DECAY_FILE))

        patch, history = train_patch(
            adapter,
            dataset,
            cfg,
            initial_patch=initial_patch,
            start_epoch=start_epoch,
            history=history,
            decay=decay,
            on_epoch_end=checkpoint,
            show_progress=args.progress,
        )
        final_path = save_patch(patch, patch_dir(run.root, tag))
        save_history(history.to_list(), run.path(HISTORY_FILE))
        if decay is not None:
            save_payload(decay_payload(adapter.name, subset.class_names, decay.points), run.path(DECAY_FILE))
    logger.info(f"Wrote patch {final_path}")
    return 0
