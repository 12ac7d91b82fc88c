"""Offline verification of register histories.

Every ``check_*`` function takes a ``History`` and returns a ``Verdict``; a
failing verdict carries a counterexample shrunk greedily to a small set of
operations that still fails for the same reason. Checks raise only when the
history itself is malformed.

Tag order of successful (``chg``) writes serves as the total order the
coverability properties are stated against.
"""

import itertools
import logging
from collections import defaultdict
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field, replace

from covreg.core import TAG0, Flag, Tag
from covreg.defaults import BRUTE_FORCE_MAX_OPS, MINIMIZE_MAX_OPS, TS_MAX
from covreg.errors import DisconnectedTreeError, SizeLimitError
from covreg.history import History, HistoryEvent, RegOp
from covreg.log_constants import COUNTEREXAMPLE_BEGIN, VERDICT_FAIL, VERDICT_PASS
from covreg.seqreg import SeqRegister

logger = logging.getLogger(__name__)

ATOMICITY = "atomicity"
VALIDITY = "validity"
CONSOLIDATION = "consolidation"
CONTINUITY = "continuity"
EVOLUTION = "evolution"
STRONG = "strong"
BARRIER = "barrier"
ORACLE = "oracle"

PROPERTIES = (ATOMICITY, VALIDITY, CONSOLIDATION, CONTINUITY, EVOLUTION, STRONG, BARRIER)
DEFAULT_PROPERTIES = (ATOMICITY, VALIDITY, CONSOLIDATION, CONTINUITY, EVOLUTION)


@dataclass(frozen=True)
class Verdict:
    """Outcome of one property check.

    ``reason`` is a short code naming the kind of failure; shrinking keeps
    only sub-histories that fail with the same code.
    """

    property: str
    passed: bool
    message: str = ""
    reason: str = ""
    op_ids: tuple[int, ...] = ()
    counterexample: tuple[HistoryEvent, ...] = ()

    def line(self) -> str:
        if self.passed:
            return f"{self.property}: {VERDICT_PASS}"
        return f"{self.property}: {VERDICT_FAIL} ({self.reason}) {self.message}"

    def report(self) -> list[str]:
        lines = [self.line()]
        if not self.passed and self.counterexample:
            lines.append(COUNTEREXAMPLE_BEGIN)
            lines.extend(f"    {e.to_line()}" for e in self.counterexample)
        return lines


def _pass(prop: str) -> Verdict:
    return Verdict(prop, True)


def _fail(prop: str, reason: str, message: str, *ops: RegOp) -> Verdict:
    return Verdict(prop, False, message, reason, tuple(sorted({o.op.op_id for o in ops})))


# -- preprocessing -----------------------------------------------------------


def _chg_consistent(o: RegOp) -> bool:
    """A chg write reports its own argument under the successor of its version."""
    p = o.op.proc
    return (
        p > 0
        and o.ver.ts < TS_MAX
        and o.value == o.arg
        and o.tag == Tag(o.ver.ts + 1, p)
    )


def complete_history(ops: list[RegOp], include_versions: bool = True) -> list[RegOp]:
    """Resolve incomplete operations.

    Incomplete reads are dropped. An incomplete write is completed as a
    ``chg`` write when its successor tag is observed elsewhere and no complete
    write produced it; otherwise it is dropped. Observed means returned by a
    read or ``unchg`` write, or, with ``include_versions``, revised by a
    ``chg`` write.

    Dropping an unobserved write can only remove constraints, and dropping an
    observed one leaves the observation unexplained, so this choice is the
    one that succeeds whenever any completion does.
    """
    produced = {o.tag for o in ops if o.op.complete and o.is_chg}
    observed = {o.tag for o in ops if o.is_read_like}
    if include_versions:
        observed |= {o.ver for o in ops if o.op.complete and o.is_chg}
    resolved = []
    for o in ops:
        if o.op.complete:
            resolved.append(o)
            continue
        if not o.is_write or o.op.proc <= 0 or o.ver.ts >= TS_MAX:
            continue
        tag = Tag(o.ver.ts + 1, o.op.proc)
        if tag in observed and tag not in produced:
            resolved.append(replace(o, value=o.arg, tag=tag, flag=Flag.CHG))
    return resolved


def _chg_writes(ops: list[RegOp]) -> list[RegOp]:
    return sorted((o for o in ops if o.is_chg), key=lambda o: (o.tag, o.op.op_id))


def _duplicate(writes: list[RegOp]) -> tuple[RegOp, RegOp] | None:
    for a, b in itertools.pairwise(writes):
        if a.tag == b.tag:
            return a, b
    return None


# -- atomicity -----------------------------------------------------------------


def _atomicity(h: History) -> Verdict:
    ops = complete_history(h.register_ops(), include_versions=False)
    writes = _chg_writes(ops)
    dup = _duplicate(writes)
    if dup:
        return _fail(ATOMICITY, "duplicate-tag", f"two chg writes produced {dup[0].tag}", *dup)
    producers = {w.tag: w for w in writes}
    for w in writes:
        if not _chg_consistent(w):
            return _fail(ATOMICITY, "bad-write", f"#{w.op.op_id} is not a legal chg write of {w.ver}", w)
    for o in ops:
        if not o.is_read_like:
            continue
        if o.is_write and o.ver == o.tag:
            return _fail(ATOMICITY, "bad-write", f"#{o.op.op_id} reports unchg on its own version {o.tag}", o)
        if o.tag == TAG0:
            if o.value != h.initial:
                return _fail(ATOMICITY, "wrong-value", f"#{o.op.op_id} returned {o.value!r} with {TAG0}", o)
            continue
        w = producers.get(o.tag)
        if w is None:
            return _fail(ATOMICITY, "unknown-tag", f"#{o.op.op_id} returned never-written {o.tag}", o)
        if w.value != o.value:
            return _fail(ATOMICITY, "wrong-value", f"#{o.op.op_id} returned {o.value!r} for {o.tag}", o, w)

    def key(o: RegOp):
        return o.tag, 0 if o.is_chg else 1

    for a, b in itertools.permutations(ops, 2):
        if a.op.precedes(b.op) and key(b) < key(a):
            return _fail(
                ATOMICITY,
                "real-time",
                f"#{a.op.op_id} precedes #{b.op.op_id} but {b.tag} orders before {a.tag}",
                a, b, *[producers[t] for t in (a.tag, b.tag) if t in producers],
            )

    reg = SeqRegister.fresh(h.initial)
    for o in sorted(ops, key=lambda o: (key(o), o.op.invoke)):
        if not _replay(reg, o):
            return _fail(ATOMICITY, "replay", f"#{o.op.op_id} cannot be replayed in tag order", o)
    return _pass(ATOMICITY)


def _replay(reg: SeqRegister, o: RegOp) -> bool:
    if o.is_write:
        return reg.replay_write(o.arg, o.ver, o.op.proc, o.outcome)
    return reg.replay_read(o.value, o.tag)


def _linearizable(ops: list[RegOp], initial: bytes) -> bool:
    preds = {o.op.op_id: {p.op.op_id for p in ops if p.op.precedes(o.op)} for o in ops}

    def search(placed: frozenset[int], reg: SeqRegister) -> bool:
        if len(placed) == len(ops):
            return True
        for o in ops:
            if o.op.op_id in placed or not preds[o.op.op_id] <= placed:
                continue
            trial = reg.copy()
            if _replay(trial, o) and search(placed | {o.op.op_id}, trial):
                return True
        return False

    return search(frozenset(), SeqRegister.fresh(initial))


def brute_force_linearizable(h: History) -> Verdict:
    """Search every real-time-respecting order of the operations for a legal replay.

    Incomplete reads are dropped; each incomplete write is tried both dropped
    and completed as a ``chg`` write.

    Raises
    ------
    SizeLimitError
        If the history has more than ``BRUTE_FORCE_MAX_OPS`` register operations.
    """
    ops = h.register_ops()
    if len(ops) > BRUTE_FORCE_MAX_OPS:
        raise SizeLimitError(len(ops), BRUTE_FORCE_MAX_OPS)
    done = [o for o in ops if o.op.complete]
    open_writes = [o for o in ops if not o.op.complete and o.is_write]
    for choice in itertools.product((False, True), repeat=len(open_writes)):
        extra = []
        for keep, o in zip(choice, open_writes):
            if not keep:
                continue
            if o.op.proc <= 0 or o.ver.ts >= TS_MAX:
                break
            extra.append(replace(o, value=o.arg, tag=Tag(o.ver.ts + 1, o.op.proc), flag=Flag.CHG))
        else:
            if _linearizable(done + extra, h.initial):
                return _pass(ORACLE)
    return Verdict(
        ORACLE, False, "no real-time-respecting order replays", "no-linearization",
        tuple(o.op.op_id for o in ops),
        tuple(h.restricted_to(o.op.op_id for o in ops).events),
    )


# -- validity and weak coverability ----------------------------------------------


def _resolved(h: History) -> list[RegOp]:
    return complete_history(h.register_ops())


def _validity(h: History) -> Verdict:
    writes = _chg_writes(_resolved(h))
    for w in writes:
        if not w.ver < w.tag:
            return _fail(VALIDITY, "ver-order", f"#{w.op.op_id} revised {w.ver} into smaller {w.tag}", w)
    dup = _duplicate(writes)
    if dup:
        return _fail(VALIDITY, "duplicate-tag", f"two chg writes produced {dup[0].tag}", *dup)
    producers = {w.tag: w for w in writes}
    for w in writes:
        chain, t = [w], w.ver
        while t != TAG0:
            parent = producers.get(t)
            if parent is None:
                return _fail(VALIDITY, "unreachable", f"{w.tag} has no chg chain back to {TAG0}", *chain)
            chain.append(parent)
            t = parent.ver
    return _pass(VALIDITY)


def _consolidation(h: History) -> Verdict:
    writes = _chg_writes(_resolved(h))
    for a, b in itertools.permutations(writes, 2):
        if not a.op.precedes(b.op):
            continue
        if not a.tag <= b.ver:
            return _fail(
                CONSOLIDATION, "stale-version",
                f"#{b.op.op_id} revised {b.ver} after #{a.op.op_id} produced {a.tag}", a, b,
            )
        if not a.tag < b.tag:
            return _fail(
                CONSOLIDATION, "order",
                f"#{b.op.op_id} produced {b.tag}, not after #{a.op.op_id}'s {a.tag}", a, b,
            )
    return _pass(CONSOLIDATION)


def _continuity(h: History) -> Verdict:
    writes = _chg_writes(_resolved(h))
    for w in writes:
        if w.ver == TAG0:
            continue
        if not any(p.tag == w.ver and p.tag < w.tag for p in writes):
            return _fail(
                CONTINUITY, "no-producer",
                f"#{w.op.op_id} revised {w.ver}, which no earlier chg write produced", w,
            )
    return _pass(CONTINUITY)


# -- version tree ------------------------------------------------------------------


@dataclass
class VersionTree:
    """Versions produced by chg writes, each a child of the version it revised.

    ``orphans`` are produced versions with no chain back to ``TAG0``.
    """

    nodes: list[Tag] = field(default_factory=lambda: [TAG0])
    parent: dict[Tag, Tag] = field(default_factory=dict)
    producer: dict[Tag, RegOp] = field(default_factory=dict)
    orphans: list[Tag] = field(default_factory=list)

    @property
    def edges(self) -> list[tuple[Tag, Tag]]:
        return sorted((p, c) for c, p in self.parent.items() if c not in self.orphans)

    def children(self, tag: Tag) -> list[Tag]:
        return sorted(c for c, p in self.parent.items() if p == tag and c not in self.orphans)

    def depth(self, tag: Tag) -> int:
        d = 0
        while tag != TAG0:
            tag = self.parent[tag]
            d += 1
        return d

    def is_ancestor(self, a: Tag, b: Tag) -> bool:
        """Whether ``a`` equals ``b`` or lies on ``b``'s path to the root."""
        while True:
            if a == b:
                return True
            if b == TAG0 or b not in self.parent:
                return False
            b = self.parent[b]

    @property
    def is_path(self) -> bool:
        return all(len(self.children(t)) <= 1 for t in self.nodes)

    def levels(self) -> dict[int, list[Tag]]:
        levels = defaultdict(list)
        for t in self.nodes:
            levels[self.depth(t)].append(t)
        return dict(sorted(levels.items()))


def _tree(writes: list[RegOp]) -> VersionTree:
    tree = VersionTree()
    for w in writes:
        if w.tag in tree.producer or w.tag == TAG0:
            continue
        tree.producer[w.tag] = w
        tree.parent[w.tag] = w.ver
    for t in sorted(tree.parent):
        seen, cur = {t}, tree.parent[t]
        while cur != TAG0 and cur in tree.parent and cur not in seen:
            seen.add(cur)
            cur = tree.parent[cur]
        if cur == TAG0:
            tree.nodes.append(t)
        else:
            tree.orphans.append(t)
    tree.nodes.sort()
    return tree


def build_version_tree(h: History) -> VersionTree:
    """Build the version tree of ``h``.

    Raises
    ------
    DisconnectedTreeError
        If a produced version has no chain of chg writes back to ``TAG0`` or
        two chg writes produced the same version.
    """
    writes = _chg_writes(_resolved(h))
    dup = _duplicate(writes)
    if dup:
        raise DisconnectedTreeError(f"version {dup[0].tag} has two producers")
    tree = _tree(writes)
    if tree.orphans:
        raise DisconnectedTreeError(
            "versions unreachable from the initial version: " + ", ".join(map(str, tree.orphans))
        )
    return tree


def depth_matches_ts(tree: VersionTree) -> bool:
    """Every version sits at the depth given by its sequence number."""
    return all(tree.depth(t) == t.ts for t in tree.nodes)


def _evolution(h: History) -> Verdict:
    tree = _tree(_chg_writes(_resolved(h)))
    highest: Tag | None = None
    highest_at = None
    for depth, tags in tree.levels().items():
        lowest = min(tags)
        if highest is not None and not highest < lowest:
            ops = [tree.producer[t] for t in (highest, lowest) if t in tree.producer]
            return _fail(
                EVOLUTION, "level-order",
                f"{lowest} at depth {depth} is not above {highest} at depth {highest_at}", *ops,
            )
        top = max(tags)
        if highest is None or top > highest:
            highest, highest_at = top, depth
    return _pass(EVOLUTION)


def _strong(h: History) -> Verdict:
    writes = _chg_writes(_resolved(h))
    dup = _duplicate(writes)
    if dup:
        return _fail(STRONG, "duplicate-tag", f"two chg writes produced {dup[0].tag}", *dup)
    by_ver = defaultdict(list)
    for w in writes:
        by_ver[w.ver].append(w)
    for ver, revisions in sorted(by_ver.items()):
        if len(revisions) > 1:
            return _fail(STRONG, "branch", f"{ver} was revised by {len(revisions)} chg writes", *revisions)
    for a, b in itertools.permutations(writes, 2):
        if a.op.precedes(b.op) and not a.tag < b.tag:
            return _fail(STRONG, "order", f"#{a.op.op_id} precedes #{b.op.op_id} but {b.tag} < {a.tag}", a, b)
    return _pass(STRONG)


def _barrier(h: History) -> Verdict:
    ops = _resolved(h)
    everything = h.register_ops()
    writes = _chg_writes(ops)
    tree = _tree(writes)
    for pin in writes:
        if not pin.op.complete:
            continue
        if any(o.op.op_id != pin.op.op_id and o.op.concurrent(pin.op) for o in everything):
            continue
        for w in writes:
            if pin.op.precedes(w.op) and not tree.is_ancestor(pin.tag, w.ver):
                return _fail(
                    BARRIER, "off-branch",
                    f"#{w.op.op_id} revised {w.ver}, off the branch pinned by solo #{pin.op.op_id} at {pin.tag}",
                    pin, w,
                )
    return _pass(BARRIER)


# -- shrinking and entry points -------------------------------------------------------


def minimize(h: History, check: Callable[[History], Verdict], op_ids: Iterable[int] = ()) -> History:
    """Greedily drop operations while ``check`` keeps failing for the same reason.

    Starts from the operations ``op_ids`` named by the failure when they fail
    on their own; otherwise from the whole history if it is small enough.
    """
    target = check(h)
    if target.passed:
        return h

    def same(sub: History) -> bool:
        v = check(sub)
        return not v.passed and v.reason == target.reason

    named = set(op_ids)
    if named and same(h.restricted_to(named)):
        h = h.restricted_to(named)
    elif len({e.op_id for e in h.events}) > MINIMIZE_MAX_OPS:
        return h.restricted_to(named) if named else h
    for op_id in sorted({e.op_id for e in h.events}):
        candidate = h.without([op_id])
        if candidate.events and same(candidate):
            h = candidate
    return h


def _shrunk(check: Callable[[History], Verdict]) -> Callable[[History], Verdict]:
    def run(h: History) -> Verdict:
        verdict = check(h)
        if verdict.passed:
            return verdict
        small = minimize(h, check, verdict.op_ids)
        final = check(small)
        if final.passed:
            final = verdict
        return replace(final, counterexample=small.events, op_ids=tuple(sorted({e.op_id for e in small.events})))
    run.__name__ = check.__name__.lstrip("_")
    run.__doc__ = check.__doc__
    return run


check_atomicity = _shrunk(_atomicity)
check_validity = _shrunk(_validity)
check_consolidation = _shrunk(_consolidation)
check_continuity = _shrunk(_continuity)
check_evolution = _shrunk(_evolution)
check_strong_coverability = _shrunk(_strong)
check_barrier = _shrunk(_barrier)

CHECKS: dict[str, Callable[[History], Verdict]] = {
    ATOMICITY: check_atomicity,
    VALIDITY: check_validity,
    CONSOLIDATION: check_consolidation,
    CONTINUITY: check_continuity,
    EVOLUTION: check_evolution,
    STRONG: check_strong_coverability,
    BARRIER: check_barrier,
}


def check_history(h: History, props: Iterable[str] = DEFAULT_PROPERTIES, oracle: bool = False) -> list[Verdict]:
    """Run the named properties in their fixed order.

    With ``oracle``, histories small enough for the brute-force search get an
    extra verdict that passes when the search agrees with ``check_atomicity``.
    """
    wanted = set(props)
    verdicts = [CHECKS[p](h) for p in PROPERTIES if p in wanted]
    if oracle:
        if len(h.register_ops()) <= BRUTE_FORCE_MAX_OPS:
            fast = next((v for v in verdicts if v.property == ATOMICITY), None) or check_atomicity(h)
            slow = brute_force_linearizable(h)
            if fast.passed == slow.passed:
                verdicts.append(_pass(ORACLE))
            else:
                verdicts.append(Verdict(
                    ORACLE, False,
                    f"atomicity says {fast.passed}, brute force says {slow.passed}",
                    "disagreement", slow.op_ids, slow.counterexample,
                ))
        else:
            logger.info("history too large for the brute-force oracle, skipping")
    return verdicts


def render_tree(tree: VersionTree) -> str:
    """Draw the version tree, one version per line with its depth and writer."""

    def label(t: Tag) -> str:
        if t == TAG0:
            return f"{t} depth 0 initial"
        return f"{t} depth {tree.depth(t)} by p{tree.producer[t].op.proc}"

    lines = [label(TAG0)]

    def walk(t: Tag, prefix: str):
        kids = tree.children(t)
        for i, child in enumerate(kids):
            last = i == len(kids) - 1
            lines.append(f"{prefix}{'└── ' if last else '├── '}{label(child)}")
            walk(child, prefix + ("    " if last else "│   "))

    walk(TAG0, "")
    return "\n".join(lines) + "\n"
