"""Multi-writer ABD variant implementing a weak coverable register.

Both client operations run two phases against all replicas and proceed on
the first majority of replies: a query for the replicas' (tag, value)
pairs, then a propagation of the chosen pair. A write whose version matches
the maximum discovered tag propagates a fresh successor tag and reports
``chg``; otherwise it writes back the discovered pair and reports
``unchg``. Reads always write back what they return.
"""

import logging
from dataclasses import dataclass, field
from enum import IntEnum

from covreg.core import TAG0, Flag, Ordering, Tag, Value, WriteOutcome, check_writer, tag_compare, tag_successor
from covreg.errors import HistoryFormatError
from covreg.history import OpKind, encode_outcome, no_args, pair_result, recorded, write_args
from covreg.quorums import Quorums
from covreg.simnet import Phase, Simulator
from covreg.wire import Reader, Writer

logger = logging.getLogger(__name__)


class MessageKind(IntEnum):
    QUERY = 1
    QUERY_REPLY = 2
    PROPAGATE = 3
    PROPAGATE_ACK = 4


_CARRIES_PAIR = (MessageKind.QUERY_REPLY, MessageKind.PROPAGATE)


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    op_id: int
    tag: Tag | None = None
    value: Value | None = None

    def encode(self) -> bytes:
        w = Writer(self.kind, self.op_id)
        if self.kind in _CARRIES_PAIR:
            w.tag(self.tag).value(self.value)
        return w.done()

    @classmethod
    def decode(cls, data: bytes) -> "Message":
        r = Reader(data)
        try:
            kind = MessageKind(r.kind)
        except ValueError as e:
            raise HistoryFormatError(f"unknown message kind {r.kind}") from e
        tag = value = None
        if kind in _CARRIES_PAIR:
            tag, value = r.tag(), r.value()
        r.end()
        return cls(kind, r.op_id, tag, value)


@dataclass(frozen=True)
class ReplicaState:
    tag: Tag
    value: Value


def replica_handle(msg: Message, st: ReplicaState) -> tuple[Message, ReplicaState]:
    """Apply the replica rule to one incoming message.

    A query is answered with the local pair. A propagated pair replaces the
    local one only if its tag is strictly greater; it is acknowledged either
    way.
    """
    if msg.kind is MessageKind.QUERY:
        return Message(MessageKind.QUERY_REPLY, msg.op_id, st.tag, st.value), st
    if msg.kind is MessageKind.PROPAGATE:
        if tag_compare(msg.tag, st.tag) is Ordering.GREATER:
            st = ReplicaState(msg.tag, msg.value)
        return Message(MessageKind.PROPAGATE_ACK, msg.op_id), st
    raise HistoryFormatError(f"replica cannot handle {msg.kind.name}")


@dataclass
class Replica:
    """Replica automaton; ``trace`` records its tag after every message."""

    pid: int
    state: ReplicaState
    trace: list[Tag] = field(default_factory=list)

    def handle(self, src: int, payload: bytes) -> list[tuple[int, bytes]]:
        reply, self.state = replica_handle(Message.decode(payload), self.state)
        self.trace.append(self.state.tag)
        return [(src, reply.encode())]


def _accept(kind: MessageKind, op_id: int):
    def accept(src: int, payload: bytes):
        msg = Message.decode(payload)
        if msg.kind is not kind or msg.op_id != op_id:
            return None
        return msg
    return accept


class VmwabdClient:
    """Client automaton for one process; issues one operation at a time."""

    def __init__(self, pid: int, recorder, replicas: list[int]):
        self.pid = pid
        self.recorder = recorder
        self.replicas = list(replicas)
        self.quorums = Quorums(len(self.replicas))
        self.last_tag = TAG0

    def _query(self, op_id: int):
        request = Message(MessageKind.QUERY, op_id).encode()
        replies = yield Phase(
            "query",
            {r: request for r in self.replicas},
            self.quorums.majority.value,
            _accept(MessageKind.QUERY_REPLY, op_id),
            quorum=True,
        )
        best = max(replies.values(), key=lambda m: m.tag)
        return best.tag, best.value

    def _propagate(self, op_id: int, tag: Tag, value: Value):
        request = Message(MessageKind.PROPAGATE, op_id, tag, value).encode()
        yield Phase(
            "propagate",
            {r: request for r in self.replicas},
            self.quorums.majority.value,
            _accept(MessageKind.PROPAGATE_ACK, op_id),
            quorum=True,
        )

    @recorded(OpKind.CVR_WRITE, write_args, encode_outcome)
    def cvr_write(self, op_id: int, val: Value, ver: Tag):
        check_writer(self.pid)
        tag, value = yield from self._query(op_id)
        if ver == tag:
            new_tag = tag_successor(tag, self.pid)
            yield from self._propagate(op_id, new_tag, val)
            outcome = WriteOutcome(val, new_tag, Flag.CHG)
        else:
            yield from self._propagate(op_id, tag, value)
            outcome = WriteOutcome(value, tag, Flag.UNCHG)
        self.last_tag = outcome.tag
        logger.debug("p%d write #%d -> %s %s", self.pid, op_id, outcome.tag, outcome.flag.value)
        return outcome

    @recorded(OpKind.CVR_READ, no_args, pair_result)
    def cvr_read(self, op_id: int):
        tag, value = yield from self._query(op_id)
        yield from self._propagate(op_id, tag, value)
        self.last_tag = tag
        return value, tag


@dataclass
class VmwabdDeployment:
    """``replicas`` replica servers, every one crashable up to a minority."""

    replicas: int
    name: str = "vmwabd"
    pids: list[int] = field(default_factory=list)
    servers: dict[int, Replica] = field(default_factory=dict)

    def install(self, sim: Simulator):
        self.pids = sim.allocate(self.replicas)
        for pid in self.pids:
            self.servers[pid] = Replica(pid, ReplicaState(TAG0, sim.initial))
            sim.add_server(pid, self.servers[pid])

    def client(self, sim: Simulator, pid: int) -> VmwabdClient:
        return VmwabdClient(pid, sim.recorder, self.pids)

    @property
    def fault_budget(self) -> int:
        return Quorums(self.replicas).f

    @property
    def crashable(self) -> list[int]:
        return self.pids

    def traces(self) -> dict[int, list[Tag]]:
        return {pid: server.trace for pid, server in self.servers.items()}
