"""Layered register for large values: metadata on directory servers, values on replica servers.

Directories store the latest ``(tag, locations)`` pair, where ``locations``
names at least ``f + 1`` replicas holding that version. Replicas keep every
``(tag, value)`` pair they are given. A client agrees on metadata with a
directory majority and moves values only to and from replicas, so
directories never carry the large payload.
"""

import logging
from dataclasses import dataclass, field
from enum import IntEnum

from covreg.core import TAG0, Flag, Tag, Value, WriteOutcome, check_writer, tag_successor
from covreg.defaults import DEFAULT_DIRECTORIES, DEFAULT_LDR_F
from covreg.errors import ConfigurationError, HistoryFormatError
from covreg.history import OpKind, encode_outcome, no_args, pair_result, recorded, write_args
from covreg.quorums import Quorum, Quorums
from covreg.simnet import Phase, Simulator
from covreg.wire import Reader, Writer

logger = logging.getLogger(__name__)


class LdrKind(IntEnum):
    GET_METADATA = 1
    METADATA = 2
    PUT_METADATA = 3
    PUT_METADATA_ACK = 4
    PUT = 5
    PUT_ACK = 6
    GET = 7
    GET_REPLY = 8


@dataclass(frozen=True)
class LdrMessage:
    kind: LdrKind
    op_id: int
    tag: Tag | None = None
    locations: frozenset[int] | None = None
    value: Value | None = None

    def encode(self) -> bytes:
        w = Writer(self.kind, self.op_id)
        if self.kind in (LdrKind.METADATA, LdrKind.PUT_METADATA):
            w.tag(self.tag).pids(self.locations)
        elif self.kind in (LdrKind.PUT, LdrKind.GET_REPLY):
            w.tag(self.tag).value(self.value)
        elif self.kind is LdrKind.GET:
            w.tag(self.tag)
        return w.done()

    @classmethod
    def decode(cls, data: bytes) -> "LdrMessage":
        r = Reader(data)
        try:
            kind = LdrKind(r.kind)
        except ValueError as e:
            raise HistoryFormatError(f"unknown ldr message kind {r.kind}") from e
        tag = locations = value = None
        if kind in (LdrKind.METADATA, LdrKind.PUT_METADATA):
            tag, locations = r.tag(), r.pids()
        elif kind in (LdrKind.PUT, LdrKind.GET_REPLY):
            tag, value = r.tag(), r.value()
        elif kind is LdrKind.GET:
            tag = r.tag()
        r.end()
        return cls(kind, r.op_id, tag, locations, value)


@dataclass(frozen=True)
class LdrMetadata:
    tag: Tag
    locations: frozenset[int]


def directory_handle(msg: LdrMessage, st: LdrMetadata, f: int) -> tuple[LdrMessage | None, LdrMetadata]:
    """Directory rule: answer queries with the stored pair; store a larger tag backed by f+1 locations."""
    if msg.kind is LdrKind.GET_METADATA:
        return LdrMessage(LdrKind.METADATA, msg.op_id, st.tag, st.locations), st
    if msg.kind is LdrKind.PUT_METADATA:
        if msg.tag > st.tag and Quorum(f + 1).is_reached(len(msg.locations)):
            st = LdrMetadata(msg.tag, msg.locations)
        return LdrMessage(LdrKind.PUT_METADATA_ACK, msg.op_id), st
    raise HistoryFormatError(f"directory cannot handle {msg.kind.name}")


def ldr_replica_handle(msg: LdrMessage, store: dict[Tag, Value]) -> tuple[LdrMessage | None, dict[Tag, Value]]:
    """Replica rule: keep every put pair; answer a get only for a stored tag."""
    if msg.kind is LdrKind.PUT:
        store = {**store, msg.tag: msg.value}
        return LdrMessage(LdrKind.PUT_ACK, msg.op_id), store
    if msg.kind is LdrKind.GET:
        if msg.tag not in store:
            return None, store
        return LdrMessage(LdrKind.GET_REPLY, msg.op_id, msg.tag, value=store[msg.tag]), store
    raise HistoryFormatError(f"replica cannot handle {msg.kind.name}")


@dataclass
class Directory:
    pid: int
    state: LdrMetadata
    f: int
    trace: list[Tag] = field(default_factory=list)

    def handle(self, src: int, payload: bytes) -> list[tuple[int, bytes]]:
        reply, self.state = directory_handle(LdrMessage.decode(payload), self.state, self.f)
        self.trace.append(self.state.tag)
        return [(src, reply.encode())]


@dataclass
class ReplicaStore:
    pid: int
    pairs: dict[Tag, Value] = field(default_factory=dict)

    def handle(self, src: int, payload: bytes) -> list[tuple[int, bytes]]:
        reply, self.pairs = ldr_replica_handle(LdrMessage.decode(payload), self.pairs)
        return [] if reply is None else [(src, reply.encode())]


def _accept(kind: LdrKind, op_id: int, tag: Tag | None = None):
    def accept(src: int, payload: bytes):
        msg = LdrMessage.decode(payload)
        if msg.kind is not kind or msg.op_id != op_id or (tag is not None and msg.tag != tag):
            return None
        return msg
    return accept


class LdrClient:
    def __init__(self, pid: int, recorder, directories: list[int], replicas: list[int], f: int):
        self.pid = pid
        self.recorder = recorder
        self.directories = list(directories)
        self.replicas = sorted(replicas)
        self.f = f
        self.quorums = Quorums(len(self.directories))
        self.replica_quorums = Quorums(len(self.replicas), f)
        self.last_tag = TAG0
        # (contacted replicas, replica that answered) for every value fetch
        self.fetches: list[tuple[frozenset[int], int]] = []

    def _get_metadata(self, op_id: int):
        request = LdrMessage(LdrKind.GET_METADATA, op_id).encode()
        replies = yield Phase(
            "get-metadata",
            {d: request for d in self.directories},
            self.quorums.majority.value,
            _accept(LdrKind.METADATA, op_id),
            quorum=True,
        )
        best = max(replies.values(), key=lambda m: m.tag)
        return best.tag, best.locations

    def _put_metadata(self, op_id: int, tag: Tag, locations: frozenset[int]):
        request = LdrMessage(LdrKind.PUT_METADATA, op_id, tag, locations).encode()
        yield Phase(
            "put-metadata",
            {d: request for d in self.directories},
            self.quorums.majority.value,
            _accept(LdrKind.PUT_METADATA_ACK, op_id),
            quorum=True,
        )

    def _put(self, op_id: int, tag: Tag, value: Value):
        spread = min(self.replica_quorums.spread.value, len(self.replicas))
        start = op_id % len(self.replicas)
        targets = [self.replicas[(start + i) % len(self.replicas)] for i in range(spread)]
        request = LdrMessage(LdrKind.PUT, op_id, tag, value=value).encode()
        replies = yield Phase("put", {r: request for r in targets}, self.replica_quorums.weak.value, _accept(LdrKind.PUT_ACK, op_id))
        return frozenset(replies)

    def _get(self, op_id: int, tag: Tag, locations: frozenset[int]):
        ordered = sorted(locations)
        reach = self.replica_quorums.weak.value
        contacted, rest = ordered[:reach], ordered[reach:]
        request = LdrMessage(LdrKind.GET, op_id, tag).encode()
        replies = yield Phase(
            "get",
            {r: request for r in contacted},
            1,
            _accept(LdrKind.GET_REPLY, op_id, tag),
            fallback={r: request for r in rest},
        )
        (src, msg), = replies.items()
        self.fetches.append((frozenset(contacted), src))
        return msg.value

    @recorded(OpKind.CVR_WRITE, write_args, encode_outcome)
    def cvr_write(self, op_id: int, val: Value, ver: Tag):
        check_writer(self.pid)
        tag, locations = yield from self._get_metadata(op_id)
        if tag != ver:
            yield from self._put_metadata(op_id, tag, locations)
            value = yield from self._get(op_id, tag, locations)
            outcome = WriteOutcome(value, tag, Flag.UNCHG)
        else:
            new_tag = tag_successor(tag, self.pid)
            stored = yield from self._put(op_id, new_tag, val)
            yield from self._put_metadata(op_id, new_tag, stored)
            outcome = WriteOutcome(val, new_tag, Flag.CHG)
        self.last_tag = outcome.tag
        return outcome

    @recorded(OpKind.CVR_READ, no_args, pair_result)
    def cvr_read(self, op_id: int):
        tag, locations = yield from self._get_metadata(op_id)
        yield from self._put_metadata(op_id, tag, locations)
        value = yield from self._get(op_id, tag, locations)
        self.last_tag = tag
        return value, tag


@dataclass
class LdrDeployment:
    """``directories`` directory servers and ``2f + 2`` replica servers; up to ``f`` replicas may crash."""

    f: int = DEFAULT_LDR_F
    directories: int = DEFAULT_DIRECTORIES
    name: str = "ldr"
    directory_pids: list[int] = field(default_factory=list)
    replica_pids: list[int] = field(default_factory=list)
    servers: dict[int, object] = field(default_factory=dict)
    clients: list[LdrClient] = field(default_factory=list)

    def __post_init__(self):
        if self.f < 0:
            raise ConfigurationError(f"f must be non-negative, got {self.f}")
        if self.directories < 1:
            raise ConfigurationError(f"directories must be at least 1, got {self.directories}")

    @property
    def replicas(self) -> int:
        return 2 * self.f + 2

    def install(self, sim: Simulator):
        self.directory_pids = sim.allocate(self.directories)
        self.replica_pids = sim.allocate(self.replicas)
        everywhere = frozenset(self.replica_pids)
        for pid in self.directory_pids:
            self.servers[pid] = Directory(pid, LdrMetadata(TAG0, everywhere), self.f)
            sim.add_server(pid, self.servers[pid])
        for pid in self.replica_pids:
            self.servers[pid] = ReplicaStore(pid, {TAG0: sim.initial})
            sim.add_server(pid, self.servers[pid])

    def client(self, sim: Simulator, pid: int) -> LdrClient:
        client = LdrClient(pid, sim.recorder, self.directory_pids, self.replica_pids, self.f)
        self.clients.append(client)
        return client

    @property
    def fault_budget(self) -> int:
        return self.f

    @property
    def crashable(self) -> list[int]:
        return self.replica_pids

    def traces(self) -> dict[int, list[Tag]]:
        return {pid: s.trace for pid, s in self.servers.items() if isinstance(s, Directory)}
