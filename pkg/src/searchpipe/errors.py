"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class SearchPipeError(Exception):
    """Base class for all errors raised by this package."""


class PreconditionError(SearchPipeError, ValueError):
    """A caller violated an operation's documented precondition."""


class TransportError(SearchPipeError):
    """Network-level failure: DNS, TLS, timeout, or an HTTP error status."""

    def __init__(self, message: str, *, status: int | None = None,
                 url: str | None = None, attempts: int = 1):
        super().__init__(message)
        self.status = status
        self.url = url
        self.attempts = attempts


class CapabilityError(SearchPipeError):
    """A required backend capability is missing or exceeded."""


class FixtureMissError(SearchPipeError):
    """Replay mode asked for a fixture that was never recorded."""

    def __init__(self, operation: str, key: str):
        super().__init__(f"fixture miss for {operation}: key {key}")
        self.operation = operation
        self.key = key


class RetrievalError(SearchPipeError):
    """A relevance scorer failed on a specific chunk."""

    def __init__(self, message: str, *, chunk_index: int):
        super().__init__(message)
        self.chunk_index = chunk_index


class DatasetError(SearchPipeError):
    """A dataset file is missing, unparseable, or invalid."""

    def __init__(self, message: str, *, problems: list[str] | None = None):
        super().__init__(message)
        self.problems = problems or []


class StageError(SearchPipeError):
    """Wraps a failure with the pipeline stage it occurred in."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
