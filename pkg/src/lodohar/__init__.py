"""Leave-one-dataset-out pre-training experiments for inertial activity recognition."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CheckpointError,
    ConfigError,
    LodoharError,
    ParseError,
    ShapeError,
    TrainingError,
    UnmappedLabelError,
    UnsupportedOperation,
    ValidationError,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "LodoharError",
    "ParseError",
    "ShapeError",
    "TrainingError",
    "UnmappedLabelError",
    "UnsupportedOperation",
    "ValidationError",
    "__version__",
]
