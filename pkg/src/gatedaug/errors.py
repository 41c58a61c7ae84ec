"""Exception types shared across the package."""


class GatedAugError(Exception):
    """Base class for all package errors."""


class ParameterError(GatedAugError, ValueError):
    """A function argument is outside its documented domain."""


class ConfigurationError(GatedAugError, ValueError):
    """A config object is internally inconsistent or names an unknown resource."""


class UsageError(GatedAugError, ValueError):
    """Bad command line or config-file input; maps to exit code 1."""


class FormatError(GatedAugError, ValueError):
    """A binary file does not match its declared format.

    ``offset`` is the byte position at which parsing failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class ShapeError(GatedAugError, ValueError):
    """An array has the wrong shape; message names expected vs got."""

    def __init__(self, expected, got):
        super().__init__(f"shape mismatch: expected {expected}, got {got}")
        self.expected = expected
        self.got = got


class NumericError(GatedAugError, RuntimeError):
    """Non-finite values appeared where finite numbers are required."""
