from patchforge.models.schemas import (
    TransformConfig,
    TrainConfig,
    TrainSection,
    ToyModelConfig,
    ToyModelKind,
    DatasetSpec,
    DatasetKind,
    RunConfig,
    EvalReportPayload,
)

__all__ = [
    "TransformConfig",
    "TrainConfig",
    "TrainSection",
    "ToyModelConfig",
    "ToyModelKind",
    "DatasetSpec",
    "DatasetKind",
    "RunConfig",
    "EvalReportPayload",
]
