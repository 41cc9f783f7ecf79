"""Domain error hierarchy.

Every error inherits from ``RLEditError`` and from the built-in it refines, so
callers that catch ``ValueError``/``RuntimeError`` keep working.
"""

from typing import Any, Dict, Optional, Tuple


class RLEditError(Exception):
    """Base class for all project errors."""


class DimensionError(RLEditError, ValueError):
    """Raised when tensor shapes are incompatible for an operation."""

    def __init__(self, op: str, *shapes: Tuple[int, ...]):
        self.op = op
        self.shapes = shapes
        rendered = " and ".join(f"{s[0]}x{s[1]}" if len(s) == 2 else str(s) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {rendered}")


class DegenerateInputError(RLEditError, ValueError):
    """Raised when an input leaves nothing to compute (e.g. every position masked)."""


class ContractError(RLEditError, ValueError):
    """Raised when a caller violates an operation's preconditions."""


class ConfigurationError(RLEditError, ValueError):
    """Raised when a configuration field is invalid."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class RecordParseError(RLEditError, ValueError):
    """Raised when a record file line cannot be parsed."""

    def __init__(self, path: str, line_number: int, message: str):
        self.path = path
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {message}")


class CheckpointFormatError(RLEditError, ValueError):
    """Raised when a checkpoint file is not a valid tensor container."""


class TrainingFailureError(RLEditError, RuntimeError):
    """Raised when training or editing produces non-finite or diverging values."""

    def __init__(
        self,
        message: str,
        step: Optional[int] = None,
        snapshot: Optional[Dict[str, Any]] = None,
    ):
        self.step = step
        self.snapshot = snapshot or {}
        prefix = f"step {step}: " if step is not None else ""
        super().__init__(f"{prefix}{message}")
