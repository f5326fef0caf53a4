import logging
from argparse import Namespace

from patchforge.cli.commands.common import build_model, open_split
from patchforge.cli.config import patch_tag
from patchforge.core.errors import AssertionFailed
from patchforge.eval.plots import save_prediction_panel
from patchforge.eval.suite import BASELINE_TAG, class_drop_ranking, transfer_matrix
from patchforge.models.schemas import RunConfig
from patchforge.store.artifacts import TRANSFER_CSV, load_patch, save_payload
from patchforge.store.rundir import PREDICTIONS_DIR, REPORTS_DIR, get_run_context

logger = logging.getLogger(__name__)


def report_filename(patch: str, model: str, suffix: str = ".json") -> str:
    return f"{patch}__{model}{suffix}"


def cmd_eval(args: Namespace, config: RunConfig) -> int:
    """Evaluate every patch on every model plus the random baseline; writes reports and the CSV."""
    dataset = open_split(config, "val")
    model_specs = config.eval.models or [config.model.name + (f"@{config.model.weights}" if config.model.weights else "")]
    adapters = [build_model(config, spec) for spec in model_specs]
    patches = [(patch_tag(path), load_patch(path)) for path in config.eval.patches]
    section = config.eval

    with get_run_context(config.output_dir, config) as run:
        sink_factory = None
        if section.save_predictions > 0:
            predictions = run.subdir(PREDICTIONS_DIR)

            def sink_for(tag: str, adapter):
                def sink(record, attacked, clean_pred, attacked_pred):
                    save_prediction_panel(
                        predictions / f"{tag}__{adapter.name}__{record.id}.png",
                        attacked,
                        clean_pred,
                        attacked_pred,
                        adapter.num_classes,
                        title=f"{tag} on {adapter.name}: {record.id}",
                    )
                return sink

            sink_factory = sink_for

        matrix = transfer_matrix(
            patches,
            adapters,
            dataset,
            baseline_seed=section.baseline_seed,
            workers=section.workers,
            spread_subset=section.spread_subset,
            spread_seed=section.spread_seed,
            bin_width=section.bin_width,
            far_radius=section.far_radius,
            max_images=section.max_images,
            sink_factory=sink_factory,
            predictions_to_save=section.save_predictions,
            show_progress=args.progress,
        )
        reports_dir = run.subdir(REPORTS_DIR)
        for (row, col), report in matrix.reports.items():
            save_payload(report.to_payload(), reports_dir / report_filename(row, col))
            report.write_class_csv(reports_dir / report_filename(row, col, ".csv"))
            if row != BASELINE_TAG:
                baseline = matrix.reports[(BASELINE_TAG, col)]
                top = ", ".join(f"{name} {drop:+.3f}" for name, drop in class_drop_ranking(baseline, report)[:3])
                logger.info(f"{row} on {col}: most affected classes {top}")
        csv_path = matrix.write_csv(run.path(TRANSFER_CSV))
        logger.info(f"Wrote {csv_path} ({len(matrix.row_labels)}x{len(matrix.col_labels)})")

    if getattr(args, "assert_diagonal", False):
        violations = matrix.diagonal_violations()
        if violations:
            raise AssertionFailed("diagonal dominance does not hold:\n  " + "\n  ".join(violations))
        logger.info("Diagonal dominance holds")
    return 0


cmd_transfer = cmd_eval
