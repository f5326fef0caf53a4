from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

CITYSCAPES_IGNORE_INDEX = 255


class StrictModel(BaseModel):
    """Base for every config section: unknown keys are rejected."""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


# Configuration models
class TransformConfig(StrictModel):
    """Parameters of the transformation distribution T."""
    scale_min: float = Field(0.5, gt=0)
    scale_max: float = Field(2.0, gt=0)
    crop_size: int = Field(1024, ge=1)
    flip_prob: float = Field(0.5, ge=0, le=1)
    # None pads with the mean color of the dataset being transformed
    pad_image_value: Optional[Tuple[float, float, float]] = None
    pad_label_value: int = CITYSCAPES_IGNORE_INDEX

    @model_validator(mode="after")
    def check_scale_range(self) -> "TransformConfig":
        if self.scale_min > self.scale_max:
            raise ValueError(f"scale_min ({self.scale_min}) must not exceed scale_max ({self.scale_max})")
        return self

    @field_validator("pad_image_value")
    @classmethod
    def check_pad_value(cls, value: Optional[Tuple[float, float, float]]) -> Optional[Tuple[float, float, float]]:
        if value is not None and any(v < 0 or v > 1 for v in value):
            raise ValueError("pad_image_value entries must lie in [0, 1]")
        return value

    def with_pad_default(self, mean: Sequence[float]) -> "TransformConfig":
        """This config with an unset pad color filled in from `mean`."""
        if self.pad_image_value is not None:
            return self
        return self.model_copy(update={"pad_image_value": tuple(float(v) for v in mean)})


class TrainSection(StrictModel):
    """The `train` section of a run config. Seed and transforms live at the run level."""
    step_size: float = Field(0.005, ge=0)
    epochs: int = Field(30, ge=1)
    batch_size: int = Field(6, ge=1)
    patch_size: int = Field(200, ge=1)
    eval_every: int = Field(1, ge=0)
    eval_subset: int = Field(100, ge=1)


class TrainConfig(TrainSection):
    """Patch-training recipe. Defaults are the CNN regime (batch 6, 30 epochs, 200px patch)."""
    transform: TransformConfig = Field(default_factory=TransformConfig)
    seed: int = Field(0, ge=0)


class ToyModelKind(str, Enum):
    TINY_CNN = "tiny_cnn"
    TINY_ATTENTION = "tiny_attention"


class ToyModelConfig(StrictModel):
    """Desk-scale stand-in architecture."""
    kind: ToyModelKind = ToyModelKind.TINY_CNN
    num_classes: int = Field(6, ge=2)
    width: int = Field(16, ge=1)
    seed: int = Field(0, ge=0)


class DatasetKind(str, Enum):
    CITYSCAPES_LAYOUT = "cityscapes_layout"
    SYNTH_SHAPES = "synth_shapes"


class DatasetSpec(StrictModel):
    """Where records come from: a Cityscapes-layout tree or the synthetic generator."""
    kind: DatasetKind = DatasetKind.SYNTH_SHAPES
    root: Optional[str] = None
    num_classes: int = Field(6, ge=2)
    ignore_index: int = CITYSCAPES_IGNORE_INDEX
    # synthetic generator parameters
    n_train: int = Field(300, ge=1)
    n_val: int = Field(100, ge=1)
    height: int = Field(128, ge=8)
    width: int = Field(256, ge=8)
    seed: int = Field(0, ge=0)
    cache: bool = False

    @model_validator(mode="after")
    def check_root(self) -> "DatasetSpec":
        if self.kind == DatasetKind.CITYSCAPES_LAYOUT and not self.root:
            raise ValueError("dataset.root is required for kind 'cityscapes_layout'")
        return self


class ModelSection(StrictModel):
    """Which adapter to build and how."""
    name: str = "tiny_cnn"
    width: int = Field(16, ge=1)
    seed: int = Field(0, ge=0)
    weights: Optional[str] = None
    plugin: Optional[str] = None
    options: Dict[str, object] = Field(default_factory=dict)


class PretrainSection(StrictModel):
    epochs: int = Field(20, ge=0)
    lr: float = Field(2e-3, gt=0)
    batch_size: int = Field(8, ge=1)


class EvalSection(StrictModel):
    """Evaluation protocol knobs shared by `eval` and `transfer`."""
    models: List[str] = Field(default_factory=list)
    patches: List[str] = Field(default_factory=list)
    baseline_seed: int = Field(0, ge=0)
    spread_subset: Optional[int] = Field(20, ge=1)
    spread_seed: int = Field(0, ge=0)
    bin_width: int = Field(8, ge=1)
    far_radius: Optional[int] = Field(None, ge=1)
    max_images: Optional[int] = Field(None, ge=1)
    workers: int = Field(1, ge=1)
    save_predictions: int = Field(0, ge=0)


class RunConfig(StrictModel):
    """The fully resolved configuration of one CLI invocation."""
    model: ModelSection = Field(default_factory=ModelSection)
    dataset: DatasetSpec = Field(default_factory=DatasetSpec)
    pretrain: PretrainSection = Field(default_factory=PretrainSection)
    train: TrainSection = Field(default_factory=TrainSection)
    transform: TransformConfig = Field(default_factory=TransformConfig)
    eval: EvalSection = Field(default_factory=EvalSection)
    output_dir: Optional[str] = None
    seed: int = Field(0, ge=0)
    tag: Optional[str] = None

    def train_config(self) -> TrainConfig:
        """TrainConfig with the run-level transform section and seed folded in."""
        return TrainConfig(**self.train.model_dump(), transform=self.transform, seed=self.seed)


# Report payloads
class SpreadPayload(BaseModel):
    bin_edges: List[int]
    flip_rate: List[float]
    pixel_counts: List[int]
    flip_counts: List[int]
    far_radius: int
    far_flip_ratio: float


class EvalReportPayload(BaseModel):
    """On-disk schema of one (patch, model) evaluation."""
    model: str
    family: str = "external"
    patch: str
    split: str
    miou: float
    per_class_iou: Dict[str, Optional[float]]
    per_class_drop: Dict[str, Optional[float]] = Field(default_factory=dict)
    drop_vs_baseline: Optional[float] = None
    pixels_counted: int
    n_images: int
    spread: Optional[SpreadPayload] = None


class EpochRecordPayload(BaseModel):
    epoch: int
    mean_loss: float
    eval_miou: Optional[float] = None
    per_class_iou: Optional[List[Optional[float]]] = None
    wall_time_s: float


class DecayPointPayload(BaseModel):
    epoch: int
    miou: float
    per_class_iou: List[Optional[float]]


class DecayPayload(BaseModel):
    """`decay.json`: MIoU / per-class IoU after every epoch, epoch 0 being the initial patch."""
    model: str
    class_names: List[str]
    points: List[DecayPointPayload]


class PretrainReportPayload(BaseModel):
    model: str
    kind: str
    epochs: int
    val_miou: float
    per_class_iou: Dict[str, Optional[float]]
    final_loss: Optional[float] = None
    checksum: str
