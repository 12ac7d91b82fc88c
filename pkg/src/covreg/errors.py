"""Error classes for covreg."""

from dataclasses import dataclass, field

from covreg.defaults import EXIT_IO, EXIT_PROPERTY_FAILURE, EXIT_USAGE


class CovregError(Exception):
    """Base exception for covreg errors."""


class ConfigurationError(CovregError):
    """Raised for invalid configuration (non-retryable)."""


class ReservedWriterError(CovregError):
    """Raised when process id 0, reserved for the initial version, is used as a writer."""

    def __init__(self, pid: int):
        self.pid = pid
        super().__init__(f"Process id {pid} cannot write: writer ids must be positive")


class TagOverflowError(CovregError):
    """Raised when a tag's sequence number would leave the 64-bit range."""

    def __init__(self, ts: int):
        self.ts = ts
        super().__init__(f"Tag sequence number {ts} cannot be incremented without overflow")


class HistoryFormatError(CovregError):
    """Raised when a history, workload, or wire payload cannot be parsed."""

    def __init__(self, message: str, lineno: int = 0, line: str = ""):
        self.lineno = lineno
        self.line = line
        if lineno:
            message = f"line {lineno}: {message}: {line!r}"
        super().__init__(message)


class MalformedHistoryError(CovregError):
    """Raised when invoke/respond events are unpaired or interleaved."""


class SizeLimitError(CovregError):
    """Raised when the brute-force oracle is handed too many operations."""

    def __init__(self, count: int, limit: int):
        self.count = count
        self.limit = limit
        super().__init__(f"{count} operations exceed the brute-force limit of {limit}")


class LivenessError(CovregError):
    """Raised when a client operation gives up without completing."""


class DisconnectedTreeError(CovregError):
    """Raised when produced versions do not form a single tree rooted at the initial version."""


@dataclass
class PendingOperation:
    """Record of a client operation left unfinished by a simulation."""

    proc: int
    op: str
    op_id: int
    phase: str = ""


@dataclass
class NonQuiescenceError(CovregError):
    """Raised when a simulation stops with live clients still waiting."""

    pending: list[PendingOperation] = field(default_factory=list)

    def __post_init__(self):
        described = [f"{p.op}#{p.op_id}@{p.proc}" + (f" in {p.phase}" if p.phase else "") for p in self.pending]
        self.message = (
            f"Simulation did not quiesce. "
            f"{len(self.pending)} pending operations: {', '.join(described)}"
        )
        super().__init__(self.message)


def exit_code_for(error: Exception) -> int:
    """Classify an exception into a CLI exit code.

    Parameters
    ----------
    error : Exception
        The exception raised while running a command.

    Returns
    -------
    int
        2 for configuration and usage problems, 3 for I/O and parse errors,
        1 for anything else that stopped a run.
    """
    if isinstance(error, (ConfigurationError, ReservedWriterError, SizeLimitError)):
        return EXIT_USAGE
    if isinstance(error, (HistoryFormatError, MalformedHistoryError, OSError)):
        return EXIT_IO
    return EXIT_PROPERTY_FAILURE
