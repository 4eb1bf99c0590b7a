"""Exception hierarchy. Every error carries the CLI exit code it maps to."""

from __future__ import annotations


class ProSwitchError(Exception):
    exit_code = 1


class InputError(ProSwitchError, ValueError):
    exit_code = 2


class TransportError(ProSwitchError):
    """Upstream model call failed, or produced output we cannot use."""

    exit_code = 3

    def __init__(self, message: str, status: int | None = None) -> None:
        super().__init__(message)
        self.status = status


class UnsatisfiablePlanError(ProSwitchError):
    exit_code = 4


class LexiconParseError(InputError):
    def __init__(self, message: str, line: int | None = None) -> None:
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.line = line


class EmptyLexiconError(InputError):
    pass


class IngestError(InputError):
    pass


class MissingStyleError(InputError):
    pass


class DegenerateDataError(InputError):
    pass


class UnparseableTraceError(TransportError):
    pass


class ClassificationError(TransportError):
    pass


class AugmentationError(TransportError):
    pass
