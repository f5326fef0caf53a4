"""
Patch evaluation protocol and the patch x model transfer matrix.

Evaluation never transforms images: the patch is pasted at the center of each val image at its
native resolution, and the patch region and ignore pixels are left out of the confusion matrix.
"""
import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import torch
from tqdm import tqdm

from patchforge.core.errors import ConfigError, NoDefinedClasses
from patchforge.core.metrics import ConfusionMatrix, SpreadProfile, iou_per_class, miou, spread_profile
from patchforge.core.patch import CENTER, RANDOM_SOURCE, Patch, PlacementSpec, apply_patch, random_patch
from patchforge.data.records import SampleRecord, SegmentationDataset, seeded_subset
from patchforge.models.schemas import EvalReportPayload, SpreadPayload
from patchforge.zoo.adapter import ModelAdapter

logger = logging.getLogger(__name__)

BASELINE_TAG = RANDOM_SOURCE
CLASS_CSV_HEADER = ["class_id", "class", "iou", "drop_vs_baseline"]

# (record, attacked image, clean prediction, attacked prediction)
PredictionSink = Callable[[SampleRecord, torch.Tensor, torch.Tensor, torch.Tensor], None]


@dataclass
class EvalReport:
    model: str
    patch_tag: str
    split: str
    miou: float
    per_class_iou: List[Optional[float]]
    class_names: List[str]
    n_images: int
    pixels_counted: int
    family: str = "external"
    spread: Optional[SpreadProfile] = None
    drop_vs_baseline: Optional[float] = None
    per_class_drop: List[Optional[float]] = field(default_factory=list)
    confusion: Optional[ConfusionMatrix] = None

    def with_baseline(self, baseline: "EvalReport") -> "EvalReport":
        """Fill in drops relative to the random-patch report of the same model."""
        self.drop_vs_baseline = baseline.miou - self.miou
        self.per_class_drop = per_class_drop(baseline.per_class_iou, self.per_class_iou)
        return self

    def to_payload(self) -> EvalReportPayload:
        spread = None
        if self.spread is not None:
            spread = SpreadPayload(**self.spread.to_dict())
        return EvalReportPayload(
            model=self.model,
            family=self.family,
            patch=self.patch_tag,
            split=self.split,
            miou=self.miou,
            per_class_iou=dict(zip(self.class_names, self.per_class_iou)),
            per_class_drop=dict(zip(self.class_names, self.per_class_drop)),
            drop_vs_baseline=self.drop_vs_baseline,
            pixels_counted=self.pixels_counted,
            n_images=self.n_images,
            spread=spread,
        )

    def write_class_csv(self, path: Union[str, Path]) -> Path:
        """One row per class: id, name, IoU and drop against the baseline; blank where undefined."""
        path = Path(path)
        drops = self.per_class_drop or [None] * len(self.class_names)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(CLASS_CSV_HEADER)
            for class_id, (name, iou, drop) in enumerate(zip(self.class_names, self.per_class_iou, drops)):
                writer.writerow([class_id, name, _cell(iou), _cell(drop)])
        return path


def _cell(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.4f}"


def per_class_drop(baseline: Sequence[Optional[float]], attacked: Sequence[Optional[float]]) -> List[Optional[float]]:
    return [b - a if b is not None and a is not None else None for b, a in zip(baseline, attacked)]


def class_drop_ranking(baseline: EvalReport, attacked: EvalReport) -> List[Tuple[str, float]]:
    """Classes sorted by IoU drop, most affected first; classes with an undefined IoU are left out."""
    drops = per_class_drop(baseline.per_class_iou, attacked.per_class_iou)
    ranked = [(name, drop) for name, drop in zip(attacked.class_names, drops) if drop is not None]
    return sorted(ranked, key=lambda item: (-item[1], item[0]))


def _first_images(dataset: SegmentationDataset, max_images: Optional[int]) -> SegmentationDataset:
    if max_images is None or max_images >= len(dataset):
        return dataset
    return dataset.subset(range(max_images))


def evaluate_patch(
    adapter: ModelAdapter,
    patch: Patch,
    dataset: SegmentationDataset,
    placement: PlacementSpec = CENTER,
    *,
    patch_tag: Optional[str] = None,
    baseline: Optional[EvalReport] = None,
    spread_subset: Optional[int] = 20,
    spread_seed: int = 0,
    bin_width: int = 8,
    far_radius: Optional[int] = None,
    max_images: Optional[int] = None,
    with_spread: bool = True,
    prediction_sink: Optional[PredictionSink] = None,
    predictions_to_save: int = 0,
    show_progress: bool = False,
) -> EvalReport:
    """
    Attacked MIoU of one model under one patch.

    Args:
        adapter: model in inference mode
        patch: patch pasted at the center of every image
        dataset: evaluation split
        placement: where the patch goes
        patch_tag: label for reports (defaults to meta.source_model)
        baseline: random-patch report of the same model; fills drop_vs_baseline
        spread_subset: number of seeded images used for the spread profile (None = all)
        spread_seed: seed of that subsample
        bin_width / far_radius: spread profile binning
        max_images: evaluate only the first N images
        with_spread: skip the clean forward passes entirely when False
        prediction_sink: receives the first `predictions_to_save` predictions
    """
    dataset = _first_images(dataset, max_images)
    tag = patch_tag or patch.meta.source_model
    cm = ConfusionMatrix(adapter.num_classes)
    spread_indices = set()
    if with_spread:
        if spread_subset is None or spread_subset >= len(dataset):
            spread_indices = set(range(len(dataset)))
        else:
            chosen = seeded_subset(dataset, spread_subset, spread_seed)
            spread_indices = set(chosen.indices)
    profile: Optional[SpreadProfile] = None

    progress = tqdm(range(len(dataset)), desc=f"eval {tag} on {adapter.name}", disable=not show_progress, leave=False)
    for index in progress:
        record = dataset[index]
        attacked, region = apply_patch(record.image, patch, placement)
        attacked_pred = adapter.predict(attacked[None])[0]
        cm.update(attacked_pred, record.label, region, adapter.ignore_index)

        wants_panel = prediction_sink is not None and index < predictions_to_save
        if index in spread_indices or wants_panel:
            clean_pred = adapter.predict(record.image[None])[0]
            if index in spread_indices:
                single = spread_profile(clean_pred, attacked_pred, region, bin_width, far_radius)
                profile = single if profile is None else profile.merge(single)
            if wants_panel:
                prediction_sink(record, attacked, clean_pred, attacked_pred)

    per_class = iou_per_class(cm)
    try:
        value = miou(cm)
    except NoDefinedClasses:
        logger.warning(f"No defined class for {tag} on {adapter.name}; reporting MIoU 0")
        value = 0.0
    class_names = list(getattr(dataset, "class_names", None) or [str(c) for c in range(adapter.num_classes)])
    report = EvalReport(
        model=adapter.name,
        patch_tag=tag,
        split=getattr(dataset, "split", "val"),
        miou=value,
        per_class_iou=per_class,
        class_names=class_names,
        n_images=len(dataset),
        pixels_counted=cm.total,
        family=getattr(adapter, "family", "external"),
        spread=profile,
        confusion=cm,
    )
    if baseline is not None:
        report.with_baseline(baseline)
    logger.info(
        f"{tag} on {adapter.name}: MIoU={value:.4f}"
        + (f" drop={report.drop_vs_baseline:+.4f}" if report.drop_vs_baseline is not None else "")
    )
    return report


@dataclass
class TransferMatrix:
    """Rows are patch tags (first row is the random baseline), columns are model names."""
    row_labels: List[str]
    col_labels: List[str]
    values: List[List[float]]
    reports: Dict[Tuple[str, str], EvalReport] = field(default_factory=dict)
    sources: Dict[str, str] = field(default_factory=dict)
    families: Dict[str, str] = field(default_factory=dict)

    @property
    def baseline_row(self) -> List[float]:
        return self.values[0]

    def value(self, row: str, col: str) -> float:
        return self.values[self.row_labels.index(row)][self.col_labels.index(col)]

    def drop(self, row: str, col: str) -> float:
        return self.value(BASELINE_TAG, col) - self.value(row, col)

    def diagonal_cells(self) -> List[Tuple[str, str]]:
        """(patch tag, model) pairs where the patch was trained on that model."""
        return [
            (row, self.sources[row])
            for row in self.row_labels[1:]
            if self.sources.get(row) in self.col_labels
        ]

    def diagonal_violations(self) -> List[str]:
        """Off-diagonal cells whose drop exceeds the drop of a diagonal cell in the same row or column."""
        violations = []
        for row, col in self.diagonal_cells():
            own = self.drop(row, col)
            for other_col in self.col_labels:
                if other_col != col and self.drop(row, other_col) > own:
                    violations.append(
                        f"patch {row}: drop on {other_col} ({self.drop(row, other_col):.4f}) "
                        f"exceeds drop on {col} ({own:.4f})"
                    )
            for other_row in self.row_labels[1:]:
                if other_row != row and self.sources.get(other_row) != col and self.drop(other_row, col) > own:
                    violations.append(
                        f"model {col}: drop under {other_row} ({self.drop(other_row, col):.4f}) "
                        f"exceeds drop under its own patch {row} ({own:.4f})"
                    )
        return violations

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["patch"] + self.col_labels)
            for label, row in zip(self.row_labels, self.values):
                writer.writerow([label] + [f"{value:.4f}" for value in row])
        return path

    @classmethod
    def read_csv(cls, path: Union[str, Path]) -> "TransferMatrix":
        with Path(path).open(newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
        header, body = rows[0], rows[1:]
        return cls(
            row_labels=[row[0] for row in body],
            col_labels=header[1:],
            values=[[float(cell) for cell in row[1:]] for row in body],
        )


def transfer_matrix(
    patch_set: Sequence[Tuple[str, Patch]],
    adapters: Sequence[ModelAdapter],
    dataset: SegmentationDataset,
    *,
    baseline_seed: int = 0,
    workers: int = 1,
    sink_factory: Optional[Callable[[str, ModelAdapter], PredictionSink]] = None,
    **eval_kwargs,
) -> TransferMatrix:
    """
    Evaluate every (patch, model) pair plus a seeded random-patch baseline row.

    Columns are independent; with workers > 1 they run on a thread pool, one column per task.
    """
    if not patch_set:
        raise ConfigError("transfer matrix needs at least one patch")
    if not adapters:
        raise ConfigError("transfer matrix needs at least one model")
    tags = [tag for tag, _ in patch_set]
    if BASELINE_TAG in tags or len(set(tags)) != len(tags):
        raise ConfigError(f"patch tags must be unique and must not be '{BASELINE_TAG}': {tags}")
    names = [adapter.name for adapter in adapters]
    if len(set(names)) != len(names):
        raise ConfigError(f"model names must be unique: {names}")
    shape = patch_set[0][1].shape
    for tag, patch in patch_set:
        if patch.shape != shape:
            raise ConfigError(f"patch '{tag}' has shape {list(patch.shape)}, expected {list(shape)}")

    baseline_patch = random_patch(shape[1], shape[2], baseline_seed)

    def sink(tag: str, adapter: ModelAdapter) -> Optional[PredictionSink]:
        return sink_factory(tag, adapter) if sink_factory is not None else None

    def column(adapter: ModelAdapter) -> List[EvalReport]:
        base = evaluate_patch(
            adapter, baseline_patch, dataset, patch_tag=BASELINE_TAG, prediction_sink=sink(BASELINE_TAG, adapter), **eval_kwargs
        )
        base.drop_vs_baseline = 0.0
        base.per_class_drop = per_class_drop(base.per_class_iou, base.per_class_iou)
        cells = [base]
        for tag, patch in patch_set:
            cells.append(
                evaluate_patch(
                    adapter, patch, dataset, patch_tag=tag, baseline=base, prediction_sink=sink(tag, adapter), **eval_kwargs
                )
            )
        return cells

    if workers > 1 and len(adapters) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            columns = list(pool.map(column, adapters))
    else:
        columns = [column(adapter) for adapter in adapters]

    row_labels = [BASELINE_TAG] + tags
    values = [[columns[j][i].miou for j in range(len(adapters))] for i in range(len(row_labels))]
    reports = {
        (row_labels[i], names[j]): columns[j][i]
        for j in range(len(adapters))
        for i in range(len(row_labels))
    }
    return TransferMatrix(
        row_labels=row_labels,
        col_labels=names,
        values=values,
        reports=reports,
        sources={tag: patch.meta.source_model for tag, patch in patch_set},
        families={adapter.name: getattr(adapter, "family", "external") for adapter in adapters},
    )


@dataclass(frozen=True)
class DecayPoint:
    epoch: int
    miou: float
    per_class_iou: List[Optional[float]]


class DecayLogger:
    """Evaluates a stream of patches on one fixed subset."""

    def __init__(self, adapter: ModelAdapter, eval_subset: SegmentationDataset):
        self.adapter = adapter
        self.eval_subset = eval_subset
        self.points: List[DecayPoint] = []

    def log(self, epoch: int, patch: Patch) -> DecayPoint:
        report = evaluate_patch(self.adapter, patch, self.eval_subset, with_spread=False)
        point = DecayPoint(epoch=epoch, miou=report.miou, per_class_iou=report.per_class_iou)
        self.points.append(point)
        logger.debug(f"Decay point epoch {epoch}: MIoU={point.miou:.4f}")
        return point


def decay_logger(
    adapter: ModelAdapter,
    patch_stream: Iterable[Patch],
    eval_subset: SegmentationDataset,
) -> List[DecayPoint]:
    """(MIoU, per-class IoU) of each patch in the stream; the first patch is epoch 0."""
    decay = DecayLogger(adapter, eval_subset)
    for epoch, patch in enumerate(patch_stream):
        decay.log(epoch, patch)
    return decay.points
