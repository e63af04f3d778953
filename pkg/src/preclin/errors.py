"""Exception types shared across the package.

The CLI maps these onto exit codes: validation-style failures
(ManifestError, VolumeFormatError, ConfigError, ImbalanceError,
ContaminationError) exit 2, plain I/O failures exit 3.
"""


class PreclinError(Exception):
    """Base class for all package-specific errors."""


class VolumeFormatError(PreclinError):
    """Volume file is corrupt, truncated, non-finite, or has a bad shape."""


class ManifestError(PreclinError):
    """Cohort manifest failed parsing or referential validation."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(PreclinError):
    """Invalid model, optimizer, or pipeline configuration."""


class ImbalanceError(PreclinError):
    """A required class is missing from a dataset."""


class ContaminationError(PreclinError):
    """Evaluation subjects overlap the training split."""
