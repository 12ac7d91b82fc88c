"""Consensus and strong coverability, each built from the other.

``propose_value`` decides a value with a single coverable write on the
initial version: under strong coverability exactly one such write changes
the register and everybody returns its value.

``StrongClient`` is a strongly coverable register over a consensus oracle
that runs one instance per version. A write proposes its new version on the
instance of the version it revises; a read walks decided instances from its
cursor until it reaches an undecided one.
"""

import json
import logging
from dataclasses import dataclass, field
from enum import IntEnum

from covreg.checker import Verdict
from covreg.core import TAG0, Flag, Tag, Value, WriteOutcome, tag_successor
from covreg.defaults import ORACLE_CHASE_LIMIT
from covreg.errors import HistoryFormatError, LivenessError
from covreg.history import History, OpKind, decode_value, encode, encode_outcome, no_args, pair_result, recorded, write_args
from covreg.simnet import Phase, Simulator
from covreg.wire import Reader, Writer

logger = logging.getLogger(__name__)

AGREEMENT = "c-agreement"
VALIDITY = "c-validity"
TERMINATION = "c-termination"


@dataclass(frozen=True)
class Proposal:
    val: Value
    ver: Tag


@dataclass
class ConsensusOracle:
    """One consensus instance per version; the first non-empty proposal decides it."""

    instances: dict[Tag, Proposal] = field(default_factory=dict)

    def propose(self, ver: Tag, proposal: Proposal | None) -> Proposal | None:
        """Return the decision on instance ``ver``.

        A ``None`` proposal only reads the decision: it never decides an undecided
        instance and gets ``None`` back.
        """
        decided = self.instances.get(ver)
        if decided is None and proposal is not None:
            self.instances[ver] = decided = proposal
        return decided


class OracleKind(IntEnum):
    PROPOSE = 1
    DECISION = 2


def encode_propose(op_id: int, ver: Tag, proposal: Proposal | None) -> bytes:
    w = Writer(OracleKind.PROPOSE, op_id).tag(ver).flag(proposal is not None)
    if proposal is not None:
        w.tag(proposal.ver).value(proposal.val)
    return w.done()


def encode_decision(op_id: int, decision: Proposal | None) -> bytes:
    w = Writer(OracleKind.DECISION, op_id).flag(decision is not None)
    if decision is not None:
        w.tag(decision.ver).value(decision.val)
    return w.done()


def _read_proposal(r: Reader) -> Proposal | None:
    if not r.flag():
        return None
    ver = r.tag()
    return Proposal(r.value(), ver)


@dataclass
class OracleServer:
    """Hosts a ``ConsensusOracle`` as a simulated process."""

    pid: int
    oracle: ConsensusOracle = field(default_factory=ConsensusOracle)

    def handle(self, src: int, payload: bytes) -> list[tuple[int, bytes]]:
        r = Reader(payload)
        if r.kind != OracleKind.PROPOSE:
            raise HistoryFormatError(f"oracle cannot handle message kind {r.kind}")
        ver = r.tag()
        proposal = _read_proposal(r)
        r.end()
        return [(src, encode_decision(r.op_id, self.oracle.propose(ver, proposal)))]


def generate_version(ver: Tag, pid: int) -> Tag:
    return tag_successor(ver, pid)


class StrongClient:
    """Strongly coverable register client; ``lcver``/``lcval`` persist across operations."""

    def __init__(self, pid: int, recorder, oracle_pid: int, initial: Value = b""):
        self.pid = pid
        self.recorder = recorder
        self.oracle_pid = oracle_pid
        self.lcver = TAG0
        self.lcval = initial
        self._asks = 0

    @property
    def last_tag(self) -> Tag:
        return self.lcver

    def _propose(self, ver: Tag, proposal: Proposal | None):
        self._asks += 1
        ask = self._asks

        def accept(src: int, payload: bytes):
            r = Reader(payload)
            if r.kind != OracleKind.DECISION or r.op_id != ask:
                return None
            # one-tuple: a None decision is still an answer
            return (_read_proposal(r),)

        replies = yield Phase("propose", {self.oracle_pid: encode_propose(ask, ver, proposal)}, 1, accept)
        (decided,) = replies[self.oracle_pid]
        return decided

    def _chase(self, decided: Proposal | None):
        for _ in range(ORACLE_CHASE_LIMIT):
            if decided is None:
                return
            self.lcval, self.lcver = decided.val, decided.ver
            decided = yield from self._propose(self.lcver, None)
        raise LivenessError(f"p{self.pid} chased {ORACLE_CHASE_LIMIT} decided versions without reaching the frontier")

    @recorded(OpKind.CVR_WRITE, write_args, encode_outcome)
    def cvr_write(self, op_id: int, v: Value, ver: Tag):
        ver_new = generate_version(ver, self.pid)
        decided = yield from self._propose(ver, Proposal(v, ver_new))
        if decided.ver == ver_new:
            self.lcval, self.lcver = v, ver_new
            return WriteOutcome(v, ver_new, Flag.CHG)
        yield from self._chase(decided)
        return WriteOutcome(self.lcval, self.lcver, Flag.UNCHG)

    @recorded(OpKind.CVR_READ, no_args, pair_result)
    def cvr_read(self, op_id: int):
        decided = yield from self._propose(self.lcver, None)
        yield from self._chase(decided)
        return self.lcval, self.lcver


def propose_value(client, v: Value):
    """Decide a value by writing ``v`` over the initial version."""
    op_id = client.recorder.invoke(client.pid, OpKind.PROPOSE, encode([v.hex()]))
    outcome = yield from client.cvr_write(v, TAG0)
    client.recorder.respond(client.pid, OpKind.PROPOSE, op_id, encode([outcome.value.hex()]))
    logger.debug("p%d decided %r", client.pid, outcome.value)
    return outcome.value


@dataclass
class StrongDeployment:
    """A single oracle process; it is not crashable."""

    name: str = "strongtr"
    oracle_pid: int = 0
    server: OracleServer | None = None

    def install(self, sim: Simulator):
        (self.oracle_pid,) = sim.allocate(1)
        self.server = OracleServer(self.oracle_pid)
        sim.add_server(self.oracle_pid, self.server)

    def client(self, sim: Simulator, pid: int) -> StrongClient:
        return StrongClient(pid, sim.recorder, self.oracle_pid, sim.initial)

    @property
    def fault_budget(self) -> int:
        return 0

    @property
    def crashable(self) -> list[int]:
        return []


def check_consensus(h: History) -> list[Verdict]:
    """Agreement, validity and termination over the ``propose`` operations of ``h``."""
    ops = h.operations({OpKind.PROPOSE})
    proposed = {decode_value(json.loads(o.args)[0]) for o in ops}
    done = [o for o in ops if o.complete]
    decided = {o.op_id: decode_value(json.loads(o.result)[0]) for o in done}
    verdicts = []

    def fail(prop, reason, message, op_ids):
        return Verdict(prop, False, message, reason, tuple(op_ids), h.restricted_to(op_ids).events)

    values = sorted(set(decided.values()))
    if len(values) > 1:
        verdicts.append(fail(AGREEMENT, "disagree", f"decided {len(values)} values: {values}", decided))
    else:
        verdicts.append(Verdict(AGREEMENT, True))
    foreign = [op_id for op_id, v in decided.items() if v not in proposed]
    if foreign:
        verdicts.append(fail(VALIDITY, "unproposed", "decided a value nobody proposed", foreign))
    else:
        verdicts.append(Verdict(VALIDITY, True))
    open_ops = [o.op_id for o in ops if not o.complete]
    if open_ops:
        verdicts.append(fail(TERMINATION, "undecided", f"{len(open_ops)} proposals never decided", open_ops))
    else:
        verdicts.append(Verdict(TERMINATION, True))
    return verdicts
