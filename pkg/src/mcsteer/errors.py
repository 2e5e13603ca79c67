"""Exception hierarchy shared by every module.

Each class maps onto one process exit code so the command line tool can
translate failures without inspecting messages:

    ConfigError, ShapeError -> 2   (bad configuration or shapes)
    NumericError            -> 3   (non-finite values, divergence)
    DataFormatError         -> 4   (unreadable or truncated files)
"""

from __future__ import annotations


class McsteerError(Exception):
    """Base class for all structured errors raised by this package."""

    exit_code = 1


class ConfigError(McsteerError):
    """A configuration value is missing, out of range, or inconsistent."""

    exit_code = 2


class ShapeError(ConfigError):
    """Tensor extents do not line up; the message names the offending dimension."""

    exit_code = 2


class TapeError(ConfigError):
    """A reverse pass was requested for a value the tape never recorded."""

    exit_code = 2


class NumericError(McsteerError):
    """A computation produced non-finite values or otherwise lost meaning."""

    exit_code = 3


class DataFormatError(McsteerError):
    """A file on disk is not in the expected format.

    ``offset`` holds the byte position at which reading failed, when known.
    """

    exit_code = 4

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset
