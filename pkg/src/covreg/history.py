"""History records, the line-oriented history file format, and the recorder used by clients.

A history file starts with a header line carrying the register's initial
value, followed by one event per line with fields in fixed order::

    seq kind proc op op_id args result

``args`` and ``result`` are compact JSON (values hex-encoded, tags as
``[ts,wid]``); ``result`` is ``-`` on invoke lines.
"""

import functools
import itertools
import json
from collections.abc import Callable, Iterable
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

from covreg.core import Flag, Tag, Value, WriteOutcome
from covreg.errors import HistoryFormatError, MalformedHistoryError, TagOverflowError
from covreg.log_constants import HISTORY_HEADER, HISTORY_INITIAL_KEY, NO_RESULT


class EventKind(str, Enum):
    INVOKE = "invoke"
    RESPOND = "respond"


class OpKind(str, Enum):
    CVR_WRITE = "cvr-write"
    CVR_READ = "cvr-read"
    RMW = "rmw"
    REVISE = "revise"
    GET = "get"
    PROPOSE = "propose"


REGISTER_OPS = frozenset({OpKind.CVR_WRITE, OpKind.CVR_READ})


def encode(obj) -> str:
    return json.dumps(obj, separators=(",", ":"))


def encode_pair(value: Value, tag: Tag) -> list:
    return [value.hex(), tag.to_json()]


def encode_outcome(outcome: WriteOutcome) -> list:
    return [outcome.value.hex(), outcome.tag.to_json(), outcome.flag.value]


def decode_value(text) -> Value:
    if not isinstance(text, str):
        raise ValueError(f"expected hex string, got {text!r}")
    return bytes.fromhex(text)


@dataclass(frozen=True)
class HistoryEvent:
    """One invocation or response step."""

    seq: int
    kind: EventKind
    proc: int
    op: OpKind
    op_id: int
    args: str = "[]"
    result: str | None = None

    def to_line(self) -> str:
        result = NO_RESULT if self.result is None else self.result
        return f"{self.seq} {self.kind.value} {self.proc} {self.op.value} {self.op_id} {self.args} {result}"

    @classmethod
    def from_line(cls, line: str, lineno: int = 0) -> "HistoryEvent":
        fields = line.split(" ")
        if len(fields) != 7:
            raise HistoryFormatError(f"expected 7 fields, got {len(fields)}", lineno, line)
        seq, kind, proc, op, op_id, args, result = fields
        try:
            event = cls(
                seq=int(seq),
                kind=EventKind(kind),
                proc=int(proc),
                op=OpKind(op),
                op_id=int(op_id),
                args=args,
                result=None if result == NO_RESULT else result,
            )
            json.loads(args)
            if event.result is not None:
                json.loads(event.result)
        except ValueError as e:
            raise HistoryFormatError(str(e), lineno, line) from e
        if (event.kind is EventKind.RESPOND) != (event.result is not None):
            raise HistoryFormatError("respond lines carry a result, invoke lines do not", lineno, line)
        return event


@dataclass(frozen=True)
class Operation:
    """An invoke event paired with its response (``respond`` is None while incomplete)."""

    op_id: int
    proc: int
    op: OpKind
    invoke: int
    respond: int | None
    args: str
    result: str | None

    @property
    def complete(self) -> bool:
        return self.respond is not None

    def precedes(self, other: "Operation") -> bool:
        """Real-time precedence: this operation responded before ``other`` was invoked."""
        return self.respond is not None and self.respond < other.invoke

    def concurrent(self, other: "Operation") -> bool:
        return not self.precedes(other) and not other.precedes(self)


@dataclass(frozen=True)
class RegOp:
    """A decoded register operation: a coverable write or a read.

    ``ver``/``arg`` are the write's inputs; ``value``/``tag``/``flag`` its
    outputs (None while incomplete, ``flag`` is None for reads).
    """

    op: Operation
    ver: Tag | None = None
    arg: Value | None = None
    value: Value | None = None
    tag: Tag | None = None
    flag: Flag | None = None

    @property
    def is_write(self) -> bool:
        return self.op.op is OpKind.CVR_WRITE

    @property
    def is_chg(self) -> bool:
        return self.flag is Flag.CHG

    @property
    def is_read_like(self) -> bool:
        """Reads and unsuccessful writes both return the register's current pair."""
        return self.op.complete and not self.is_chg

    @property
    def outcome(self) -> WriteOutcome:
        return WriteOutcome(self.value, self.tag, self.flag)

    def __str__(self) -> str:
        if self.is_write:
            text = f"p{self.op.proc} cvr-write({self.arg!r},{self.ver})"
        else:
            text = f"p{self.op.proc} cvr-read()"
        if self.op.complete:
            text += f" -> ({self.value!r},{self.tag}" + (f",{self.flag.value})" if self.flag else ")")
        else:
            text += " -> pending"
        return f"#{self.op.op_id} {text} [{self.op.invoke},{self.op.respond if self.op.complete else '...'}]"


def _layer(op: OpKind) -> str:
    return "register" if op in REGISTER_OPS else "app"


@dataclass(frozen=True)
class History:
    """A sequence of history events plus the register's initial value."""

    events: tuple[HistoryEvent, ...] = ()
    initial: Value = b""

    def __len__(self) -> int:
        return len(self.events)

    def emit(self) -> str:
        lines = [f"{HISTORY_HEADER} {HISTORY_INITIAL_KEY}{self.initial.hex()}"]
        lines.extend(e.to_line() for e in self.events)
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "History":
        lines = text.splitlines()
        if not lines or not lines[0].startswith(HISTORY_HEADER):
            raise HistoryFormatError(f"missing {HISTORY_HEADER!r} header", 1, lines[0] if lines else "")
        initial = b""
        for token in lines[0][len(HISTORY_HEADER):].split():
            if token.startswith(HISTORY_INITIAL_KEY):
                try:
                    initial = bytes.fromhex(token[len(HISTORY_INITIAL_KEY):])
                except ValueError as e:
                    raise HistoryFormatError(str(e), 1, lines[0]) from e
        events = tuple(
            HistoryEvent.from_line(line, lineno)
            for lineno, line in enumerate(lines[1:], 2)
            if line and not line.startswith("#")
        )
        return cls(events, initial)

    def save(self, path) -> None:
        Path(path).write_text(self.emit())

    @classmethod
    def load(cls, path) -> "History":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except UnicodeDecodeError as e:
            raise HistoryFormatError(f"{path} is not UTF-8 text: {e.reason} at byte {e.start}") from e
        return cls.parse(text)

    def operations(self, kinds: Iterable[OpKind] | None = None) -> list[Operation]:
        """Pair invoke and respond events into operations, in invocation order.

        Raises
        ------
        MalformedHistoryError
            If timestamps do not increase, a response has no matching
            invocation, or a process invokes a second operation of the same
            layer (register or app) before the first one responded.
        """
        wanted = set(kinds) if kinds is not None else None
        invokes: dict[int, HistoryEvent] = {}
        responds: dict[int, HistoryEvent] = {}
        open_ops: dict[tuple[int, str], int] = {}
        last_seq = None
        for e in self.events:
            if last_seq is not None and e.seq <= last_seq:
                raise MalformedHistoryError(f"event seq {e.seq} does not follow {last_seq}")
            last_seq = e.seq
            key = (e.proc, _layer(e.op))
            if e.kind is EventKind.INVOKE:
                if e.op_id in invokes:
                    raise MalformedHistoryError(f"op_id {e.op_id} invoked twice")
                if key in open_ops:
                    raise MalformedHistoryError(
                        f"process {e.proc} invoked #{e.op_id} while #{open_ops[key]} is still open"
                    )
                invokes[e.op_id] = e
                open_ops[key] = e.op_id
            else:
                inv = invokes.get(e.op_id)
                if inv is None or e.op_id in responds:
                    raise MalformedHistoryError(f"respond for #{e.op_id} has no open invocation")
                if inv.proc != e.proc or inv.op is not e.op:
                    raise MalformedHistoryError(f"respond for #{e.op_id} does not match its invocation")
                responds[e.op_id] = e
                del open_ops[key]
        ops = []
        for op_id, inv in invokes.items():
            if wanted is not None and inv.op not in wanted:
                continue
            resp = responds.get(op_id)
            ops.append(Operation(
                op_id=op_id,
                proc=inv.proc,
                op=inv.op,
                invoke=inv.seq,
                respond=resp.seq if resp else None,
                args=inv.args,
                result=resp.result if resp else None,
            ))
        return ops

    def register_ops(self) -> list[RegOp]:
        return [decode_register_op(op) for op in self.operations(REGISTER_OPS)]

    def without(self, op_ids: Iterable[int]) -> "History":
        dropped = set(op_ids)
        return replace(self, events=tuple(e for e in self.events if e.op_id not in dropped))

    def restricted_to(self, op_ids: Iterable[int]) -> "History":
        kept = set(op_ids)
        return replace(self, events=tuple(e for e in self.events if e.op_id in kept))


def decode_register_op(op: Operation) -> RegOp:
    """Decode the JSON arguments and results of a register operation."""
    try:
        args = json.loads(op.args)
        result = json.loads(op.result) if op.result is not None else None
        ver = arg = value = tag = flag = None
        if op.op is OpKind.CVR_WRITE:
            arg, ver = decode_value(args[0]), Tag.from_json(args[1])
            if result is not None:
                value, tag, flag = decode_value(result[0]), Tag.from_json(result[1]), Flag(result[2])
        elif result is not None:
            value, tag = decode_value(result[0]), Tag.from_json(result[1])
    except (ValueError, IndexError, TypeError, TagOverflowError) as e:
        raise HistoryFormatError(f"cannot decode {op.op.value} #{op.op_id}: {e}") from e
    return RegOp(op, ver=ver, arg=arg, value=value, tag=tag, flag=flag)


class HistoryRecorder:
    """Collects history events stamped by a shared logical clock.

    Parameters
    ----------
    clock : Callable[[], int]
        Returns the next logical timestamp; shared with the simulator so that
        history timestamps and scheduled events are drawn from one sequence.
    """

    def __init__(self, clock: Callable[[], int] | None = None):
        self._clock = clock or itertools.count(1).__next__
        self._op_ids = itertools.count(1)
        self.events: list[HistoryEvent] = []
        self.open: dict[int, tuple[int, OpKind]] = {}

    def invoke(self, proc: int, op: OpKind, args: str = "[]") -> int:
        op_id = next(self._op_ids)
        self.events.append(HistoryEvent(self._clock(), EventKind.INVOKE, proc, op, op_id, args))
        self.open[op_id] = (proc, op)
        return op_id

    def respond(self, proc: int, op: OpKind, op_id: int, result: str) -> None:
        self.events.append(HistoryEvent(self._clock(), EventKind.RESPOND, proc, op, op_id, result=result))
        self.open.pop(op_id, None)

    def history(self, initial: Value = b"") -> History:
        return History(tuple(self.events), initial)


def recorded(op: OpKind, args: Callable[..., object], result: Callable[[object], object]):
    """Record a client operation's invocation and response around its generator.

    The wrapped generator receives the allocated ``op_id`` as its first
    argument after ``self``; ``self`` must expose ``pid`` and ``recorder``.
    """
    def wrap(fn):
        @functools.wraps(fn)
        def operation(self, *params):
            op_id = self.recorder.invoke(self.pid, op, encode(args(*params)))
            outcome = yield from fn(self, op_id, *params)
            self.recorder.respond(self.pid, op, op_id, encode(result(outcome)))
            return outcome
        return operation
    return wrap


def write_args(val: Value, ver: Tag) -> list:
    return encode_pair(val, ver)


def no_args() -> list:
    return []


def pair_result(pair: tuple[Value, Tag]) -> list:
    return encode_pair(*pair)
