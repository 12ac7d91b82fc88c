"""Client workloads: scripted step lists, seeded random workloads, and JSON workload files."""

import itertools
import json
import random
from dataclasses import dataclass
from pathlib import Path

from covreg.core import TAG0, Tag, Value
from covreg.errors import HistoryFormatError, TagOverflowError
from covreg.history import EventKind, History, HistoryEvent, OpKind, decode_value, encode, encode_outcome, encode_pair
from covreg.seqreg import SeqRegister
from covreg.simnet import PAUSE, SimConfig

LAST = "last"


@dataclass(frozen=True)
class Step:
    """One operation a client issues.

    ``ver`` of None means the client's last observed tag.
    """

    op: OpKind
    value: Value = b""
    ver: Tag | None = None
    modifier: str | None = None


@dataclass(frozen=True)
class Workload:
    initial: Value
    clients: dict[int, list[Step]]


def random_workload(cfg: SimConfig) -> dict[int, list[Step]]:
    """Writers revise their last observed version; readers read."""
    workload = {}
    for pid in range(1, cfg.writers + 1):
        workload[pid] = [
            Step(OpKind.CVR_WRITE, f"{pid}:{k}".encode()) for k in range(cfg.ops_per_client)
        ]
    for pid in range(cfg.writers + 1, cfg.clients + 1):
        workload[pid] = [Step(OpKind.CVR_READ) for _ in range(cfg.ops_per_client)]
    return workload


def rmw_workload(cfg: SimConfig, modifier: str = "incr") -> dict[int, list[Step]]:
    return {
        pid: [Step(OpKind.RMW, modifier=modifier) for _ in range(cfg.ops_per_client)]
        for pid in range(1, cfg.clients + 1)
    }


def consensus_workload(proposers: int) -> dict[int, list[Step]]:
    return {pid: [Step(OpKind.PROPOSE, f"v{pid}".encode())] for pid in range(1, proposers + 1)}


def _parse_step(raw: dict, where: str) -> Step:
    try:
        op = OpKind(raw["op"])
        value = decode_value(raw.get("value", ""))
        ver = raw.get("ver", LAST)
        modifier = raw.get("modifier")
        if ver == LAST:
            ver = None
        else:
            ver = Tag.from_json(ver)
    except (KeyError, ValueError, TypeError, TagOverflowError) as e:
        raise HistoryFormatError(f"{where}: {e}") from e
    if op is OpKind.RMW and modifier is None:
        raise HistoryFormatError(f"{where}: rmw step needs a modifier")
    return Step(op, value, ver, modifier)


def load_workload(path) -> Workload:
    """Load a scripted workload file.

    The file is JSON: ``{"initial": hex, "clients": {"1": [step, ...]}}``
    where a step is ``{"op": kind, "value": hex, "ver": [ts, wid] | "last",
    "modifier": name}``.

    Raises
    ------
    HistoryFormatError
        If the file is not valid JSON or a step cannot be decoded.
    """
    try:
        data = json.loads(Path(path).read_text())
        initial = decode_value(data.get("initial", ""))
        clients = {
            int(pid): [_parse_step(raw, f"client {pid} step {i}") for i, raw in enumerate(steps)]
            for pid, steps in data["clients"].items()
        }
    except (KeyError, ValueError, AttributeError, TypeError) as e:
        raise HistoryFormatError(f"{path}: {e}") from e
    return Workload(initial, clients)


def start_step(client, step: Step):
    """Return the generator that performs ``step`` on ``client``."""
    from covreg import apps, consensus

    ver = client.last_tag if step.ver is None else step.ver
    if step.op is OpKind.CVR_WRITE:
        return client.cvr_write(step.value, ver)
    if step.op is OpKind.CVR_READ:
        return client.cvr_read()
    if step.op is OpKind.RMW:
        return apps.rmw(client, step.modifier)
    if step.op is OpKind.REVISE:
        return apps.file_revise(client, step.value, ver)
    if step.op is OpKind.GET:
        return apps.file_get(client)
    return consensus.propose_value(client, step.value)


def client_task(client, steps: list[Step]):
    """Issue ``steps`` in order with a scheduled client step between operations."""
    for i, step in enumerate(steps):
        if i:
            yield PAUSE
        yield from start_step(client, step)


_FORGED_TAGS = (TAG0, Tag(1, 1), Tag(1, 2), Tag(2, 1), Tag(2, 2))
_FORGED_VALUES = (b"", b"a", b"b")


def forged_history(seed: int, max_ops: int = 6, procs: int = 3) -> History:
    """A seeded register history that may or may not be atomic.

    Each response is computed by applying the operation to a sequential
    register at response time, so an untouched history is linearizable. About
    half of the seeds then corrupt some responses with values and tags drawn
    from a small pool, and some operations never respond.
    """
    rng = random.Random(seed)
    reg = SeqRegister.fresh()
    corrupt = rng.random() < 0.5
    n = rng.randint(1, max_ops)
    seqs = itertools.count(1)
    events: list[HistoryEvent] = []
    open_ops: dict[int, tuple[int, OpKind, Value, Tag | None]] = {}
    busy: set[int] = set()
    started = 0
    while True:
        idle = [p for p in range(1, procs + 1) if p not in busy]
        if started < n and idle and (not open_ops or rng.random() < 0.5):
            started += 1
            proc = rng.choice(idle)
            busy.add(proc)
            if rng.random() < 0.5:
                ver = reg.state.tag if rng.random() < 0.6 else rng.choice(_FORGED_TAGS)
                arg = rng.choice(_FORGED_VALUES[1:])
                open_ops[started] = (proc, OpKind.CVR_WRITE, arg, ver)
                args = encode([arg.hex(), ver.to_json()])
            else:
                open_ops[started] = (proc, OpKind.CVR_READ, b"", None)
                args = encode([])
            events.append(HistoryEvent(next(seqs), EventKind.INVOKE, proc, open_ops[started][1], started, args))
            continue
        if not open_ops:
            break
        op_id = rng.choice(sorted(open_ops))
        proc, kind, arg, ver = open_ops.pop(op_id)
        if rng.random() < 0.1:
            # never responds; the process stays busy
            continue
        busy.discard(proc)
        if kind is OpKind.CVR_WRITE:
            result = encode_outcome(reg.write(arg, ver, proc))
            if corrupt and rng.random() < 0.3:
                result = [rng.choice(_FORGED_VALUES).hex(), rng.choice(_FORGED_TAGS).to_json(), rng.choice(["chg", "unchg"])]
        else:
            result = encode_pair(*reg.read())
            if corrupt and rng.random() < 0.3:
                result = encode_pair(rng.choice(_FORGED_VALUES), rng.choice(_FORGED_TAGS))
        events.append(HistoryEvent(next(seqs), EventKind.RESPOND, proc, kind, op_id, "[]", encode(result)))
    return History(tuple(events))
