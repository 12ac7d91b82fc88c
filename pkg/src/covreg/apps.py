"""Applications built on any coverable register client: weak read-modify-write and versioned files.

A client here is anything exposing the generator operations ``cvr_read()``
and ``cvr_write(value, ver)`` plus ``pid`` and ``recorder``.
"""

import json
import logging
from collections.abc import Callable
from dataclasses import dataclass
from enum import Enum

from covreg.checker import Verdict
from covreg.core import Tag, Value
from covreg.defaults import DEFAULT_FILE_RETRIES
from covreg.errors import ConfigurationError, LivenessError
from covreg.history import (
    History,
    Operation,
    OpKind,
    REGISTER_OPS,
    decode_register_op,
    decode_value,
    encode,
    encode_pair,
)
from covreg.simnet import PAUSE

logger = logging.getLogger(__name__)

OK = "OK"
RMW = "rmw"


class RmwStatus(str, Enum):
    SUCCESS = "success"
    FAIL = "fail"


@dataclass(frozen=True)
class RmwOutcome:
    value: Value
    status: RmwStatus

    @property
    def succeeded(self) -> bool:
        return self.status is RmwStatus.SUCCESS


def _append(suffix: str) -> Callable[[Value], Value]:
    try:
        chunk = bytes.fromhex(suffix)
    except ValueError as e:
        raise ConfigurationError(f"append modifier needs a hex suffix, got {suffix!r}") from e
    return lambda old: old + chunk


def _incr(old: Value) -> Value:
    try:
        return str(int(old or b"0") + 1).encode()
    except ValueError as e:
        raise ConfigurationError(f"incr needs a decimal register value, got {old!r}") from e


MODIFIERS: dict[str, Callable[[Value], Value]] = {
    "incr": _incr,
    "upper": bytes.upper,
}


def resolve_modifier(name: str) -> Callable[[Value], Value]:
    """Look up a modifier by name: ``incr``, ``upper`` or ``append:<hex>``."""
    if name.startswith("append:"):
        return _append(name.split(":", 1)[1])
    if name not in MODIFIERS:
        raise ConfigurationError(f"unknown modifier {name!r}; expected one of {sorted(MODIFIERS)} or append:<hex>")
    return MODIFIERS[name]


def rmw(client, modifier: str):
    """Read, apply ``modifier``, and try to write the result over the version read.

    Succeeds exactly when the write changes the register; a failed attempt
    returns the value the write discovered instead. No retry is made.
    """
    f = resolve_modifier(modifier)
    op_id = client.recorder.invoke(client.pid, OpKind.RMW, encode([modifier]))
    old, lcver = yield from client.cvr_read()
    yield PAUSE
    outcome = yield from client.cvr_write(f(old), lcver)
    status = RmwStatus.SUCCESS if outcome.changed else RmwStatus.FAIL
    result = RmwOutcome(outcome.value, status)
    client.recorder.respond(client.pid, OpKind.RMW, op_id, encode([result.value.hex(), status.value]))
    logger.debug("p%d rmw #%d %s", client.pid, op_id, status.value)
    return result


def file_revise(client, content: Value, ver: Tag):
    """Replace the file's contents if ``ver`` is still current.

    Returns ``OK``, or the newer (contents, version) pair to rebase on.
    """
    op_id = client.recorder.invoke(client.pid, OpKind.REVISE, encode(encode_pair(content, ver)))
    outcome = yield from client.cvr_write(content, ver)
    result = OK if outcome.changed else (outcome.value, outcome.tag)
    client.recorder.respond(
        client.pid, OpKind.REVISE, op_id, encode([OK] if result == OK else encode_pair(*result))
    )
    return result


def file_get(client):
    op_id = client.recorder.invoke(client.pid, OpKind.GET, encode([]))
    content, tag = yield from client.cvr_read()
    client.recorder.respond(client.pid, OpKind.GET, op_id, encode(encode_pair(content, tag)))
    return content, tag


def file_append(client, chunk: Value, retries: int = DEFAULT_FILE_RETRIES):
    """Append ``chunk``, rebasing on the newer contents after every refused revision.

    Returns the number of revisions it took.

    Raises
    ------
    LivenessError
        If ``retries`` revisions were all refused.
    """
    content, ver = yield from file_get(client)
    for attempt in range(1, retries + 1):
        result = yield from file_revise(client, content + chunk, ver)
        if result == OK:
            return attempt
        content, ver = result
        yield PAUSE
    raise LivenessError(f"p{client.pid} could not append after {retries} revisions")


# -- checking ---------------------------------------------------------------


@dataclass(frozen=True)
class RmwRecord:
    op: Operation
    modifier: str
    status: RmwStatus | None
    value: Value | None
    read: object = None
    write: object = None


def rmw_records(h: History) -> list[RmwRecord]:
    """Pair every rmw with the register read and write its process ran inside it."""
    inner = [decode_register_op(o) for o in h.operations(REGISTER_OPS)]
    records = []
    for op in h.operations({OpKind.RMW}):
        (modifier,) = json.loads(op.args)
        end = op.respond if op.complete else float("inf")
        mine = [o for o in inner if o.op.proc == op.proc and op.invoke < o.op.invoke < end]
        read = next((o for o in mine if not o.is_write), None)
        write = next((o for o in mine if o.is_write), None)
        status = value = None
        if op.complete:
            raw_value, raw_status = json.loads(op.result)
            status, value = RmwStatus(raw_status), decode_value(raw_value)
        records.append(RmwRecord(op, modifier, status, value, read, write))
    return records


def contention_groups(records: list[RmwRecord]) -> list[list[RmwRecord]]:
    """Connected components of the overlap graph of rmw intervals."""
    groups: list[list[RmwRecord]] = []
    for rec in sorted(records, key=lambda r: r.op.invoke):
        joined = [g for g in groups if any(rec.op.concurrent(o.op) for o in g)]
        merged = [rec]
        for g in joined:
            groups.remove(g)
            merged.extend(g)
        groups.append(sorted(merged, key=lambda r: r.op.invoke))
    return sorted(groups, key=lambda g: g[0].op.invoke)


def check_rmw(h: History) -> Verdict:
    """Check the weak read-modify-write guarantees of a history.

    Every contention group contains a success (a group with an unfinished
    member is exempt), every success wrote the modifier applied to the value
    its read returned, and the reported status matches the write's flag.
    """
    records = rmw_records(h)
    for rec in records:
        if rec.status is None:
            continue
        if rec.read is None or rec.write is None or not rec.write.op.complete:
            return _rmw_fail(h, "shape", f"rmw #{rec.op.op_id} lacks its read or write", [rec])
        if (rec.status is RmwStatus.SUCCESS) != rec.write.is_chg:
            return _rmw_fail(h, "status", f"rmw #{rec.op.op_id} reported {rec.status.value}", [rec])
        if rec.status is RmwStatus.SUCCESS:
            expected = resolve_modifier(rec.modifier)(rec.read.value)
            if rec.write.arg != expected or rec.value != expected:
                return _rmw_fail(
                    h, "wrong-value",
                    f"rmw #{rec.op.op_id} wrote {rec.write.arg!r}, expected {expected!r}", [rec],
                )
    for group in contention_groups(records):
        if any(r.status is None for r in group):
            continue
        if not any(r.status is RmwStatus.SUCCESS for r in group):
            ids = ", ".join(f"#{r.op.op_id}" for r in group)
            return _rmw_fail(h, "no-success", f"no rmw in contention group {ids} succeeded", group)
    return Verdict(RMW, True)


def _rmw_fail(h: History, reason: str, message: str, group: list[RmwRecord]) -> Verdict:
    ids = set()
    for rec in group:
        ids.add(rec.op.op_id)
        ids.update(o.op.op_id for o in (rec.read, rec.write) if o is not None)
    sub = h.restricted_to(ids)
    return Verdict(RMW, False, message, reason, tuple(sorted(ids)), sub.events)
