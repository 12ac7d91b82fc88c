"""Binary message codec shared by the protocol automata.

Every message starts with a kind byte and a 64-bit op id; the remaining
fields depend on the kind and are packed big-endian: tags as two 64-bit
integers, values as 32-bit length-prefixed bytes, process-id sets as a
16-bit count followed by 64-bit ids.
"""

import struct

from covreg.core import Tag, Value
from covreg.errors import HistoryFormatError

_HEADER = struct.Struct(">BQ")
_TAG = struct.Struct(">QQ")
_U32 = struct.Struct(">I")
_U16 = struct.Struct(">H")
_U64 = struct.Struct(">Q")


class Writer:
    def __init__(self, kind: int, op_id: int):
        self._parts = [_HEADER.pack(kind, op_id)]

    def tag(self, tag: Tag) -> "Writer":
        self._parts.append(_TAG.pack(tag.ts, tag.wid))
        return self

    def value(self, value: Value) -> "Writer":
        self._parts.append(_U32.pack(len(value)))
        self._parts.append(bytes(value))
        return self

    def pids(self, pids) -> "Writer":
        ordered = sorted(pids)
        self._parts.append(_U16.pack(len(ordered)))
        self._parts.extend(_U64.pack(p) for p in ordered)
        return self

    def u64(self, n: int) -> "Writer":
        self._parts.append(_U64.pack(n))
        return self

    def flag(self, on: bool) -> "Writer":
        self._parts.append(b"\x01" if on else b"\x00")
        return self

    def done(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    """Sequential decoder; ``kind`` and ``op_id`` are read on construction."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0
        self.kind, self.op_id = self._unpack(_HEADER)

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise HistoryFormatError(f"truncated message: need {n} bytes at offset {self._pos}")
        chunk = self._data[self._pos:self._pos + n]
        self._pos += n
        return chunk

    def _unpack(self, fmt: struct.Struct) -> tuple:
        return fmt.unpack(self._take(fmt.size))

    def tag(self) -> Tag:
        return Tag(*self._unpack(_TAG))

    def value(self) -> Value:
        (n,) = self._unpack(_U32)
        return self._take(n)

    def pids(self) -> frozenset[int]:
        (n,) = self._unpack(_U16)
        return frozenset(self._unpack(_U64)[0] for _ in range(n))

    def u64(self) -> int:
        return self._unpack(_U64)[0]

    def flag(self) -> bool:
        return self._take(1) != b"\x00"

    def end(self) -> None:
        if self._pos != len(self._data):
            raise HistoryFormatError(f"{len(self._data) - self._pos} trailing bytes in message")
