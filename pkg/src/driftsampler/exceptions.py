"""Exception types shared across the package."""


class DriftSamplerError(Exception):
    """Base class for all package errors."""


class InvalidInputError(DriftSamplerError, ValueError):
    """Malformed or out-of-contract input (bad shapes, bad config values)."""


class CapabilityError(DriftSamplerError):
    """A requested capability is not available (e.g. target has no sampler)."""


class NumericError(DriftSamplerError):
    """A computation produced non-finite or otherwise unusable numbers."""


class SingularCurvatureError(NumericError):
    """The curvature-corrected solve matrix is numerically singular."""


class TrainingAborted(DriftSamplerError):
    """Training stopped on a numeric failure; carries diagnostic file paths."""

    def __init__(self, message: str, diagnostics_path=None, last_checkpoint=None):
        super().__init__(message)
        self.diagnostics_path = diagnostics_path
        self.last_checkpoint = last_checkpoint
