"""Exception types shared across the package."""

from __future__ import annotations


class PosecropError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(PosecropError):
    """Malformed JSON input; carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class SchemaError(PosecropError):
    """Structurally valid JSON that violates the annotation schema."""


class ReferentialError(PosecropError):
    """An annotation references an image id that does not exist."""


class RasterError(PosecropError):
    """Raster data for a scene could not be read or decoded."""


class SceneTooSmallError(PosecropError):
    """A scene is smaller than the configured minimum crop resolution."""


class InfeasibleTargetsError(PosecropError):
    """The proposal budget ran out before a crop could be accepted.

    Signals that the configured distribution targets cannot be met on
    the given scene set. ``snapshot`` holds the running statistics at
    the moment of exhaustion.
    """

    def __init__(self, message: str, snapshot: dict | None = None):
        super().__init__(message)
        self.snapshot = snapshot or {}
