"""Exception types shared across the package."""


class MazefluxError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(MazefluxError):
    """Invalid configuration value: empty range, bad menu entry, zero-sized plan."""


class GeometryError(ConfigurationError):
    """Contradictory or malformed geometry description."""


class ShapeError(MazefluxError):
    """Array shape inconsistent with the declared layer or grid sizes."""


class ProtocolError(MazefluxError):
    """Training data violates a model's protocol (e.g. mixed source functions)."""


class TrainingError(MazefluxError):
    """Training diverged or produced non-finite values.

    Carries the iteration index at which the failure occurred.
    """

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class MetricsError(MazefluxError):
    """Metric is undefined for the given inputs (zero-norm group, constant truth)."""


class DatasetError(MazefluxError):
    """Base class for dataset/checkpoint container failures."""


class DatasetVersionError(DatasetError):
    """Container was written by an unsupported format version."""


class DatasetTruncatedError(DatasetError):
    """Container ends before the declared payload is complete."""


class DatasetChecksumError(DatasetError):
    """Container checksum does not match its contents."""
