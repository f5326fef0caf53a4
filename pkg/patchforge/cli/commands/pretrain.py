import logging
from argparse import Namespace

from patchforge.cli.commands.common import build_model, open_split
from patchforge.core.errors import ConfigError
from patchforge.models.schemas import PretrainReportPayload, RunConfig, ToyModelKind
from patchforge.store.artifacts import save_payload
from patchforge.store.rundir import get_run_context
from patchforge.zoo.adapter import TorchSegmentationAdapter
from patchforge.zoo.pretrain import pretrain_toy

logger = logging.getLogger(__name__)

TOY_NAMES = {kind.value for kind in ToyModelKind}


def weights_filename(model_name: str) -> str:
    return f"{model_name}.pt"


def report_filename(model_name: str) -> str:
    return f"{model_name}.pretrain.json"


def cmd_pretrain_toy(args: Namespace, config: RunConfig) -> int:
    """Train a toy model on the configured dataset; write weights and a val MIoU report."""
    name = config.model.name
    if name not in TOY_NAMES:
        raise ConfigError(f"pretrain-toy only trains toy models ({', '.join(sorted(TOY_NAMES))}), got '{name}'")
    train = open_split(config, "train")
    val = open_split(config, "val")
    adapter = build_model(config)
    if not isinstance(adapter, TorchSegmentationAdapter):
        raise ConfigError(f"'{name}' is not a torch adapter and cannot be pretrained here")

    with get_run_context(config.output_dir, config) as run:
        result = pretrain_toy(
            adapter,
            train,
            val,
            epochs=config.pretrain.epochs,
            lr=config.pretrain.lr,
            seed=config.seed,
            batch_size=config.pretrain.batch_size,
            show_progress=args.progress,
        )
        weights_path = adapter.save_weights(run.path(weights_filename(name)))
        checksum = adapter.parameter_checksum()
        report = PretrainReportPayload(
            model=name,
            kind=adapter.family,
            epochs=config.pretrain.epochs,
            val_miou=result.val_miou,
            per_class_iou=dict(zip(val.class_names, result.per_class_iou)),
            final_loss=result.epoch_losses[-1] if result.epoch_losses else None,
            checksum=checksum,
        )
        save_payload(report, run.path(report_filename(name)))
    logger.info(f"Wrote {weights_path} (val MIoU {result.val_miou:.4f}, checksum {checksum[:12]})")
    return 0
