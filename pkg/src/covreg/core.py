"""Value types shared by every register implementation."""

from dataclasses import dataclass
from enum import Enum
from typing import NewType

from covreg.defaults import TS_MAX
from covreg.errors import ReservedWriterError, TagOverflowError

ProcessId = NewType("ProcessId", int)

# Register values are opaque byte strings; equality is byte-wise.
Value = bytes


class Ordering(Enum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


class Flag(str, Enum):
    """Whether a coverable write changed the register."""

    CHG = "chg"
    UNCHG = "unchg"


@dataclass(frozen=True, order=True)
class Tag:
    """Version identifier: a sequence number and the id of the writer that produced it.

    Field order makes the generated comparisons lexicographic: ``ts`` first,
    then ``wid`` breaks ties between concurrent writers.
    """

    ts: int = 0
    wid: int = 0

    def __post_init__(self):
        if self.ts < 0 or self.wid < 0:
            raise ValueError(f"Tag fields must be non-negative, got ({self.ts},{self.wid})")
        if self.ts > TS_MAX:
            raise TagOverflowError(self.ts)

    def to_json(self) -> list[int]:
        return [self.ts, self.wid]

    @classmethod
    def from_json(cls, data) -> "Tag":
        if not isinstance(data, list) or len(data) != 2 or not all(isinstance(x, int) and not isinstance(x, bool) for x in data):
            raise ValueError(f"Tag must be a two-element integer array, got {data!r}")
        return cls(data[0], data[1])

    def __str__(self) -> str:
        return f"({self.ts},{self.wid})"


TAG0 = Tag(0, 0)


@dataclass(frozen=True)
class WriteOutcome:
    """Result of a coverable write: the register's value and version, and whether it changed."""

    value: Value
    tag: Tag
    flag: Flag

    @property
    def changed(self) -> bool:
        return self.flag is Flag.CHG


@dataclass(frozen=True)
class RegisterState:
    value: Value
    tag: Tag


def tag_compare(a: Tag, b: Tag) -> Ordering:
    """Compare two tags lexicographically (sequence number, then writer id)."""
    if a == b:
        return Ordering.EQUAL
    return Ordering.LESS if a < b else Ordering.GREATER


def check_writer(w: int) -> None:
    """Raise ``ReservedWriterError`` unless ``w`` may produce versions."""
    if w <= 0:
        raise ReservedWriterError(w)


def tag_successor(t: Tag, w: int) -> Tag:
    """Return the tag a writer ``w`` produces when it revises ``t``.

    Raises
    ------
    ReservedWriterError
        If ``w`` is 0, the id reserved for the initial version.
    TagOverflowError
        If ``t.ts`` is already at the 64-bit bound.
    """
    check_writer(w)
    if t.ts >= TS_MAX:
        raise TagOverflowError(t.ts)
    return Tag(t.ts + 1, w)
