"""
Evaluation protocol, transfer matrix and figure emission
"""
from patchforge.eval.suite import (
    BASELINE_TAG,
    DecayLogger,
    DecayPoint,
    EvalReport,
    TransferMatrix,
    class_drop_ranking,
    decay_logger,
    evaluate_patch,
    transfer_matrix,
)

__all__ = [
    "BASELINE_TAG",
    "DecayLogger",
    "DecayPoint",
    "EvalReport",
    "TransferMatrix",
    "class_drop_ranking",
    "decay_logger",
    "evaluate_patch",
    "transfer_matrix",
]
