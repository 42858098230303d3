"""Shared exception hierarchy.

Every error carries the name of the subsystem that raised it so the CLI can
attribute failures in its exit message.
"""


class MmlabError(Exception):
    """Base class for all package errors."""

    module = "mmlab"

    def __str__(self) -> str:
        return f"{self.module}: {super().__str__()}"


class LogParseError(MmlabError):
    """A persisted log line could not be parsed or failed validation."""

    module = "messages"

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class SequenceError(MmlabError):
    """Sequence numbers are not strictly increasing."""

    module = "messages"


class MessageInvariantError(MmlabError):
    module = "messages"


class SnapshotError(MmlabError):
    """Snapshot failed validation (crossed book, duplicate ids, ...)."""

    module = "messages"


class FeedError(MmlabError):
    """Connection-level failure while recording; the partial log is intact."""

    module = "recorder"

    retriable = True


class SnapshotOutOfRangeError(MmlabError):
    """Snapshot sequence does not fall inside the buffered stream range."""

    module = "recorder"


class CrossedBookError(MmlabError):
    module = "book"


class BookIntegrityError(MmlabError):
    """Strict-mode escalation of a recoverable book inconsistency."""

    module = "book"


class SideExhaustedError(MmlabError):
    """A depth query asked for more quantity than the side holds."""

    module = "book"


class PriceGridError(MmlabError):
    """A price does not sit on the configured tick grid."""

    module = "book"


class WindowCoverageError(MmlabError):
    """A flow window extends before the start of the available log."""

    module = "book"


class CalibrationError(MmlabError):
    module = "marketsim"


class InventoryCapError(MmlabError):
    module = "accounting"


class OrderRequestError(MmlabError):
    """Client-side rejection of a submit/cancel request."""

    module = "env"


class TrainingDiverged(MmlabError):
    module = "rl"


class ConfigError(MmlabError):
    module = "config"
