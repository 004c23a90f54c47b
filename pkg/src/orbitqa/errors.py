"""Exception types shared across the package."""


class OrbitQAError(Exception):
    """Base class for all package errors."""


class ValidationError(OrbitQAError, ValueError):
    """Invalid input data, configuration, or precondition violation."""


class PlyError(ValidationError):
    """Malformed or unsupported PLY content."""


class FeatureFileError(ValidationError):
    """Malformed or truncated feature/checkpoint file."""


class UndefinedMetricError(OrbitQAError, ArithmeticError):
    """A correlation statistic is undefined for the given inputs
    (e.g. a constant vector makes the rank correlation denominator zero)."""


class TrainingDivergedError(OrbitQAError, RuntimeError):
    """Training loss became non-finite or exploded.

    Carries the epoch index at which divergence was detected.
    """

    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")
