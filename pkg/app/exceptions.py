"""
Error hierarchy for ISMForge.

Every error carries an ``exit_code`` and a human-readable ``detail``, the way
an HTTP error carries a status code and detail. The CLI turns them into
process exit codes: 2 for configuration/format problems, 3 for runtime
failures.
"""

from typing import Optional

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class ISMForgeError(Exception):
    """Base class of all domain errors."""

    exit_code: int = EXIT_RUNTIME

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


# --- Configuration / input errors (exit 2) ---

class ConfigError(ISMForgeError):
    """Invalid run configuration or missing input path."""
    exit_code = EXIT_CONFIG


class FormatError(ISMForgeError):
    """Malformed file; ``line`` is 1-based when known."""
    exit_code = EXIT_CONFIG

    def __init__(self, detail: str, path: Optional[str] = None, line: Optional[int] = None):
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{detail}")
        self.path = path
        self.line = line


class SchemaMismatchError(ISMForgeError):
    """Input files that cannot be combined (versions, columns, pairing)."""
    exit_code = EXIT_CONFIG


# --- Runtime errors (exit 3) ---

class InvalidGeometryError(ISMForgeError):
    """Source or receiver on or outside a wall."""


class DegenerateGeometryError(ISMForgeError):
    """Coincident points where a direction is required."""


class PreconditionError(ISMForgeError):
    """An operation was called outside its domain."""


class OutOfRangeError(ISMForgeError):
    """A target value cannot be reached with the allowed parameters."""


class InfiniteT60Error(ISMForgeError):
    """All absorption coefficients are zero."""


class RequestTooLongError(ISMForgeError):
    """The RIR would exceed the configured sample cap."""


class InfeasibleProfileError(ISMForgeError):
    """Rejection sampling gave up on a scenario profile."""


class NoValidCropError(ISMForgeError):
    """Silent dry speech: no crop window carries speech energy."""


class NoEstimateError(ISMForgeError):
    """All-zero input: no DOA can be estimated."""


class DatasetIOError(ISMForgeError):
    """I/O failure while writing a dataset."""
