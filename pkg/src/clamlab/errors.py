"""Exception types shared across the package."""

from __future__ import annotations


class ShapeMismatchError(ValueError):
    """Operands do not conform for an op; names the op and the shapes."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        detail = " vs ".join(str(s) for s in self.shapes)
        super().__init__(f"{op}: incompatible shapes {detail}")


class FormatError(Exception):
    """Base class for binary file-format errors."""


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class ConfigError(ValueError):
    """Experiment config rejected (unknown key, bad type, bad value)."""


class TrainingDivergedError(RuntimeError):
    """A loss went non-finite; carries the step index in the message."""
