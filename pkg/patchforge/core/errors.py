"""
Exception hierarchy shared by every patchforge module.

Each class carries the process exit code the CLI returns when it escapes a command:
2 for usage/config problems, 3 for runtime failures.
"""

USAGE_EXIT_CODE = 2
RUNTIME_EXIT_CODE = 3


class PatchForgeError(Exception):
    """Base class for all patchforge errors."""
    exit_code = RUNTIME_EXIT_CODE


class ConfigError(PatchForgeError, ValueError):
    """Invalid configuration, flag or preset."""
    exit_code = USAGE_EXIT_CODE


class DomainError(PatchForgeError, ValueError):
    """Pixel values outside the unit RGB range."""


class PatchTooLarge(PatchForgeError, ValueError):
    """Patch does not fit inside the image it is applied to."""


class FormatError(PatchForgeError, ValueError):
    """Patch artifact or report file is corrupted or has the wrong version."""


class InvalidSpec(PatchForgeError, ValueError):
    """A TransformSpec that cannot be applied to the given image."""


class ShapeMismatch(PatchForgeError, ValueError):
    """Tensors whose shapes do not agree."""


class ClassIdOutOfRange(PatchForgeError, ValueError):
    """Class id outside {0..C-1} and not the ignore index."""


class EmptyBatch(PatchForgeError, ValueError):
    """Loss reduction over zero images."""


class EmptyDataset(PatchForgeError, ValueError):
    """A split with no records."""


class NoDefinedClasses(PatchForgeError, ValueError):
    """MIoU requested from a confusion matrix with no defined IoU."""


class NonFiniteLoss(PatchForgeError, ArithmeticError):
    """Scalar loss evaluated to NaN or Inf."""


class NonFiniteGradient(PatchForgeError, ArithmeticError):
    """Patch gradient contains NaN or Inf."""


class DivergenceError(PatchForgeError, ArithmeticError):
    """Model pretraining loss became non-finite."""


class UnknownModel(PatchForgeError, KeyError):
    """Adapter name not present in the registry."""
    exit_code = USAGE_EXIT_CODE

    def __str__(self) -> str:
        return Exception.__str__(self)


class DuplicateName(PatchForgeError, KeyError):
    """Adapter name registered twice."""

    def __str__(self) -> str:
        return Exception.__str__(self)


class MissingPair(PatchForgeError, FileNotFoundError):
    """Cityscapes image without its labelTrainIds mask."""

    def __init__(self, sample_id: str, expected_path: str = ""):
        self.sample_id = sample_id
        self.expected_path = expected_path
        message = f"no label found for image '{sample_id}'"
        if expected_path:
            message = f"{message} (expected {expected_path})"
        super().__init__(message)


class LayoutError(PatchForgeError, ValueError):
    """Dataset directory tree does not follow the expected layout."""
    exit_code = USAGE_EXIT_CODE


class MissingArtifacts(PatchForgeError, FileNotFoundError):
    """Run directory lacks the files a command needs."""
    exit_code = USAGE_EXIT_CODE


class RunDirectoryLocked(PatchForgeError, RuntimeError):
    """Another invocation owns the run directory."""
    exit_code = USAGE_EXIT_CODE


class ModelMutated(PatchForgeError, RuntimeError):
    """Model parameters changed while a patch was being trained or evaluated."""


class AssertionFailed(PatchForgeError, AssertionError):
    """A result-level check requested on the command line did not hold."""
    exit_code = 1
