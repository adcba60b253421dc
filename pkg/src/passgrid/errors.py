"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, DataError (and
ValueError from numeric routines) -> 3, OSError -> 4.
"""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for all toolkit-specific errors."""


class ConfigError(ToolkitError):
    """Invalid configuration: bad policy spec, grid, manifest or flag combination."""


class DataError(ToolkitError):
    """Invalid data: malformed files, violated invariants, missing cells."""


class TranscriptError(DataError):
    """Transcript text that does not follow the line grammar."""
