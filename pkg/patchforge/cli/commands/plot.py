import logging
from argparse import Namespace
from pathlib import Path
from typing import Dict, List, Optional

from patchforge.core.errors import MissingArtifacts
from patchforge.core.metrics import SpreadProfile
from patchforge.eval.plots import plot_miou_decay, plot_per_class_decay, plot_spread_profiles, plot_transfer_drop_bars
from patchforge.eval.suite import BASELINE_TAG, TransferMatrix
from patchforge.models.schemas import DecayPayload, DecayPointPayload, RunConfig
from patchforge.store.artifacts import DECAY_FILE, HISTORY_FILE, TRANSFER_CSV, load_decay, load_history, load_report
from patchforge.store.rundir import FIGURES_DIR, REPORTS_DIR

logger = logging.getLogger(__name__)


def decay_from_history(run_dir: Path) -> Optional[DecayPayload]:
    """Decay curve rebuilt from the evaluated epochs of a history.json."""
    records = [record for record in load_history(run_dir / HISTORY_FILE) if record.get("eval_miou") is not None]
    if not records:
        return None
    n_classes = max(len(record.get("per_class_iou") or []) for record in records)
    points = [
        DecayPointPayload(
            epoch=record["epoch"],
            miou=record["eval_miou"],
            per_class_iou=record.get("per_class_iou") or [None] * n_classes,
        )
        for record in records
    ]
    return DecayPayload(model=run_dir.name, class_names=[f"class_{c}" for c in range(n_classes)], points=points)


def collect_decays(run_dirs: List[Path]) -> List[DecayPayload]:
    decays = []
    for run_dir in run_dirs:
        if (run_dir / DECAY_FILE).is_file():
            decays.append(load_decay(run_dir / DECAY_FILE))
        elif (run_dir / HISTORY_FILE).is_file():
            decay = decay_from_history(run_dir)
            if decay is not None:
                decays.append(decay)
    return decays


def collect_spreads(run_dirs: List[Path]) -> Dict[str, SpreadProfile]:
    """Spread profiles of the attacked (non-baseline) cells of every report."""
    profiles = {}
    for run_dir in run_dirs:
        for path in sorted((run_dir / REPORTS_DIR).glob("*.json")):
            report = load_report(path)
            if report.spread is None or report.patch == BASELINE_TAG:
                continue
            profiles[f"{report.patch} on {report.model}"] = SpreadProfile.from_dict(report.spread.model_dump())
    return profiles


def cmd_plot(args: Namespace, config: RunConfig) -> int:
    """Write every figure the given run directories have data for."""
    run_dirs = [Path(path) for path in args.run_dirs]
    for run_dir in run_dirs:
        if not run_dir.is_dir():
            raise MissingArtifacts(f"run directory {run_dir} does not exist")
    out = Path(config.output_dir) if config.output_dir else run_dirs[0] / FIGURES_DIR
    written = []

    decays = collect_decays(run_dirs)
    if decays:
        written.append(plot_miou_decay(decays, out / "miou_decay.png"))
        for decay in decays:
            if decay.class_names and all(point.per_class_iou for point in decay.points):
                written.append(plot_per_class_decay(decay, out / f"per_class_decay_{decay.model}.png"))

    for run_dir in run_dirs:
        if (run_dir / TRANSFER_CSV).is_file():
            matrix = TransferMatrix.read_csv(run_dir / TRANSFER_CSV)
            name = "transfer_drop_bars.png" if len(run_dirs) == 1 else f"transfer_drop_bars_{run_dir.name}.png"
            written.append(plot_transfer_drop_bars(matrix.row_labels, matrix.col_labels, matrix.values, out / name))

    spreads = collect_spreads(run_dirs)
    if spreads:
        written.append(plot_spread_profiles(spreads, out / "spread_profile.png"))

    if not written:
        raise MissingArtifacts(
            f"nothing to plot in {', '.join(str(d) for d in run_dirs)}: "
            f"expected {HISTORY_FILE}, {DECAY_FILE}, {TRANSFER_CSV} or {REPORTS_DIR}/*.json"
        )
    logger.info(f"Wrote {len(written)} figures to {out}")
    return 0
