"""Single-site ranked register with two commit policies, plus a schedule runner and property checks.

Operations are split into ``begin`` and ``finish`` so scripted schedules can
make them overlap. Under the strict policy a write aborts whenever a higher
rank has been seen; under the permissive policy it aborts only if a
higher-rank operation is still in flight when it finishes, so a lower-rank
write can commit after a higher-rank one already did.
"""

import random
from dataclasses import dataclass, field
from enum import Enum

from covreg.checker import Verdict
from covreg.core import Value
from covreg.defaults import RANKED_SEARCH_SCHEDULES
from covreg.log_constants import PREFIX_RANKED

R0 = 0
SAFETY = "rr-safety"
NON_TRIVIALITY = "rr-non-triviality"


class Policy(str, Enum):
    PERMISSIVE = "permissive"
    STRICT = "strict"


class Result(str, Enum):
    COMMIT = "commit"
    ABORT = "abort"


class OpType(str, Enum):
    WRITE = "write"
    READ = "read"


@dataclass(frozen=True)
class RankedOutcome:
    """``rank`` is the rank observed: the committed or read rank, or on abort the higher rank that caused it."""

    result: Result
    rank: int
    value: Value | None = None


@dataclass
class _InFlight:
    kind: OpType
    rank: int
    value: Value | None


@dataclass
class RankedRegister:
    initial: Value = b""
    policy: Policy = Policy.PERMISSIVE
    committed: tuple[int, Value] = field(init=False)
    highest_seen: int = R0
    commits: list[tuple[int, Value]] = field(default_factory=list)
    in_flight: dict[int, _InFlight] = field(default_factory=dict)
    _next: int = 1

    def __post_init__(self):
        self.committed = (R0, self.initial)

    def _begin(self, kind: OpType, rank: int, value: Value | None) -> int:
        if rank < R0:
            raise ValueError(f"ranks are non-negative, got {rank}")
        op = self._next
        self._next += 1
        self.in_flight[op] = _InFlight(kind, rank, value)
        self.highest_seen = max(self.highest_seen, rank)
        return op

    def begin_write(self, rank: int, value: Value) -> int:
        return self._begin(OpType.WRITE, rank, value)

    def begin_read(self, rank: int) -> int:
        return self._begin(OpType.READ, rank, None)

    def finish(self, op: int) -> RankedOutcome:
        pending = self.in_flight.pop(op)
        if pending.kind is OpType.READ:
            rank, value = self.committed
            return RankedOutcome(Result.COMMIT, rank, value)
        if self.policy is Policy.STRICT:
            blocker = self.highest_seen
        else:
            blocker = max((p.rank for p in self.in_flight.values()), default=R0)
        if blocker > pending.rank:
            return RankedOutcome(Result.ABORT, blocker)
        self.commits.append((pending.rank, pending.value))
        if pending.rank >= self.committed[0]:
            self.committed = (pending.rank, pending.value)
        return RankedOutcome(Result.COMMIT, pending.rank, pending.value)

    def rr_write(self, rank: int, value: Value) -> RankedOutcome:
        return self.finish(self.begin_write(rank, value))

    def rr_read(self, rank: int) -> tuple[int, Value]:
        outcome = self.finish(self.begin_read(rank))
        return outcome.rank, outcome.value


# -- schedules ------------------------------------------------------------------


@dataclass(frozen=True)
class Action:
    """``begin`` or ``finish`` of scripted operation ``op``."""

    step: str
    op: int
    kind: OpType = OpType.WRITE
    rank: int = R0
    value: Value = b""


@dataclass
class ScheduleRecord:
    op: int
    kind: OpType
    rank: int
    value: Value
    begin: int
    finish: int | None = None
    outcome: RankedOutcome | None = None


def random_schedule(rng: random.Random, ops: int = 4, max_rank: int = 6) -> list[Action]:
    """Random interleaving of ``ops`` operations, each begun before it finishes."""
    begun, actions, pending = 0, [], []
    while begun < ops or pending:
        if begun < ops and (not pending or rng.random() < 0.5):
            begun += 1
            kind = OpType.WRITE if rng.random() < 0.7 else OpType.READ
            value = f"w{begun}".encode() if kind is OpType.WRITE else b""
            actions.append(Action("begin", begun, kind, rng.randint(1, max_rank), value))
            pending.append(begun)
        else:
            op = pending.pop(rng.randrange(len(pending)))
            actions.append(Action("finish", op))
    return actions


def run_schedule(reg: RankedRegister, schedule: list[Action]) -> list[ScheduleRecord]:
    records: dict[int, ScheduleRecord] = {}
    handles: dict[int, int] = {}
    for i, a in enumerate(schedule):
        if a.step == "begin":
            handles[a.op] = (
                reg.begin_write(a.rank, a.value) if a.kind is OpType.WRITE else reg.begin_read(a.rank)
            )
            records[a.op] = ScheduleRecord(a.op, a.kind, a.rank, a.value, i)
        else:
            rec = records[a.op]
            rec.finish, rec.outcome = i, reg.finish(handles[a.op])
    return [records[op] for op in sorted(records)]


def _precedes(a: ScheduleRecord, b: ScheduleRecord) -> bool:
    return a.finish is not None and a.finish < b.begin


def check_safety(records: list[ScheduleRecord], initial: Value = b"") -> Verdict:
    """Reads return a committed pair or the initial one, never below a preceding commit of lower rank than the read."""
    commits = [r for r in records if r.kind is OpType.WRITE and r.outcome and r.outcome.result is Result.COMMIT]
    for read in records:
        if read.kind is not OpType.READ or read.outcome is None:
            continue
        pair = (read.outcome.rank, read.outcome.value)
        written = {(c.rank, c.value) for c in commits if c.finish < read.finish}
        if pair != (R0, initial) and pair not in written:
            return Verdict(SAFETY, False, f"read {read.op} returned unwritten {pair}", "unwritten", (read.op,))
        for c in commits:
            if _precedes(c, read) and read.rank > c.rank and read.outcome.rank < c.rank:
                return Verdict(
                    SAFETY, False,
                    f"read {read.op} (rank {read.rank}) returned rank {read.outcome.rank} after commit {c.op} at rank {c.rank}",
                    "regression", (c.op, read.op),
                )
    return Verdict(SAFETY, True)


def check_non_triviality(records: list[ScheduleRecord]) -> Verdict:
    """A write aborts only if a higher-rank operation preceded or overlapped it, and reports that rank."""
    for w in records:
        if w.kind is not OpType.WRITE or w.outcome is None or w.outcome.result is not Result.ABORT:
            continue
        if w.outcome.rank <= w.rank:
            return Verdict(
                NON_TRIVIALITY, False, f"write {w.op} aborted reporting rank {w.outcome.rank}", "low-report", (w.op,)
            )
        higher = [o for o in records if o.rank > w.rank and o.begin < w.finish]
        if not higher:
            return Verdict(
                NON_TRIVIALITY, False, f"write {w.op} aborted with no higher rank around", "spurious-abort", (w.op,)
            )
    return Verdict(NON_TRIVIALITY, True)


def lower_rank_commit(records: list[ScheduleRecord], low: int = 2, high: int = 5) -> bool:
    """Whether a rank-``low`` write committed after a rank-``high`` write had committed."""
    commits = [r for r in records if r.kind is OpType.WRITE and r.outcome and r.outcome.result is Result.COMMIT]
    return any(
        a.rank == high and b.rank == low and a.finish < b.finish
        for a in commits for b in commits
    )


def find_lower_rank_commit(
    seed: int = 0, schedules: int = RANKED_SEARCH_SCHEDULES, low: int = 2, high: int = 5
) -> tuple[int, list[Action], list[ScheduleRecord]] | None:
    """Search seeded random schedules on a permissive register for a lower-rank commit.

    Returns the seed, schedule and records of the first hit.
    """
    for s in range(seed, seed + schedules):
        schedule = random_schedule(random.Random(s))
        records = run_schedule(RankedRegister(policy=Policy.PERMISSIVE), schedule)
        if lower_rank_commit(records, low, high):
            return s, schedule, records
    return None


def transcript(schedule: list[Action], records: list[ScheduleRecord]) -> list[str]:
    by_op = {r.op: r for r in records}
    lines = []
    for a in schedule:
        rec = by_op[a.op]
        if a.step == "begin":
            what = f"write(rank {rec.rank}, {rec.value!r})" if rec.kind is OpType.WRITE else f"read(rank {rec.rank})"
            lines.append(f"{PREFIX_RANKED} begin #{a.op} {what}")
        else:
            o = rec.outcome
            detail = f"rank {o.rank}" + (f" value {o.value!r}" if o.value is not None else "")
            lines.append(f"{PREFIX_RANKED} finish #{a.op} {o.result.value} {detail}")
    return lines
