"""Deterministic discrete-event simulator for message-passing register protocols.

Servers are event-driven automata: ``handle(src, payload)`` returns the
messages to send. Clients are generators; every protocol phase is a
``Phase`` the client yields, naming the requests to send and how many
accepted replies it needs. The simulator delivers messages in a seeded
pseudo-random order and resumes the generator with the collected replies
once enough have arrived.

One logical clock stamps scheduled events and history events alike, so
real-time precedence in the recorded history is precedence on that clock.
"""

import heapq
import itertools
import logging
import random
from collections.abc import Callable, Generator
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Protocol

from covreg.core import Value
from covreg.defaults import (
    CRASH_HORIZON_PER_OP,
    DEFAULT_CRASHES,
    DEFAULT_OPS_PER_CLIENT,
    DEFAULT_READERS,
    DEFAULT_REPLICAS,
    DEFAULT_SEED,
    DEFAULT_WRITERS,
)
from covreg.errors import ConfigurationError, NonQuiescenceError, PendingOperation
from covreg.history import History, HistoryRecorder, OpKind
from covreg.log_constants import EVENTS_HEADER
from covreg.quorums import intersects

logger = logging.getLogger(__name__)


class EventKind(str, Enum):
    DELIVER = "deliver"
    CRASH = "crash"
    CLIENT_STEP = "client-step"


@dataclass(frozen=True)
class SimEvent:
    seq: int
    kind: EventKind
    src: int
    dst: int
    payload: bytes = b""

    def to_line(self) -> str:
        return f"{self.seq} {self.kind.value} {self.src} {self.dst} {self.payload.hex() or '-'}"


@dataclass
class SimConfig:
    """Parameters of one simulated run.

    Parameters
    ----------
    seed : int
        Seeds every scheduling and crash decision.
    replicas : int
        Number of replica servers.
    writers, readers : int
        Client counts; writers get process ids ``1..writers``, readers follow.
    ops_per_client : int
        Operations each client issues in a random workload.
    crashes : int
        Replicas crashed at random points of the run.
    delay_bound : int | None
        When set, a message is delivered at most ``delay_bound`` scheduling
        steps after it would be in FIFO order; None means fully asynchronous.
    liveness : bool
        Enforce the protocol's fault budget and require quiescence.
    crash_clients : bool
        Allow clients to be crashed explicitly.
    """

    seed: int = DEFAULT_SEED
    replicas: int = DEFAULT_REPLICAS
    writers: int = DEFAULT_WRITERS
    readers: int = DEFAULT_READERS
    ops_per_client: int = DEFAULT_OPS_PER_CLIENT
    crashes: int = DEFAULT_CRASHES
    delay_bound: int | None = None
    liveness: bool = True
    crash_clients: bool = False

    @property
    def clients(self) -> int:
        return self.writers + self.readers

    def validate(self):
        if self.replicas < 1:
            raise ConfigurationError(f"replicas must be at least 1, got {self.replicas}")
        if self.writers < 0 or self.readers < 0:
            raise ConfigurationError("client counts must be non-negative")
        if self.ops_per_client < 0:
            raise ConfigurationError(f"ops per client must be non-negative, got {self.ops_per_client}")
        if self.crashes < 0:
            raise ConfigurationError(f"crashes must be non-negative, got {self.crashes}")
        if self.delay_bound is not None and self.delay_bound < 0:
            raise ConfigurationError(f"delay bound must be non-negative, got {self.delay_bound}")


@dataclass
class Phase:
    """One request/reply round of a client operation.

    ``accept`` decodes a reply and returns None for stale or foreign
    messages, which are discarded. ``fallback`` lists requests the simulator
    sends once if the run would otherwise stall in this phase. Phases marked
    ``quorum`` have their responder sets checked for pairwise intersection.
    """

    name: str
    requests: dict[int, bytes]
    need: int
    accept: Callable[[int, bytes], object | None]
    fallback: dict[int, bytes] = field(default_factory=dict)
    quorum: bool = False


class Pause:
    """Yielded by a client between local steps; resumed by a scheduled client step."""

    def __repr__(self):
        return "PAUSE"


PAUSE = Pause()

ClientTask = Generator[Phase | Pause, dict, object]


class Server(Protocol):
    def handle(self, src: int, payload: bytes) -> list[tuple[int, bytes]]: ...


class Deployment(Protocol):
    """Installs a protocol's servers and builds its clients."""

    name: str

    def install(self, sim: "Simulator") -> None: ...

    def client(self, sim: "Simulator", pid: int): ...

    @property
    def fault_budget(self) -> int: ...

    @property
    def crashable(self) -> list[int]: ...


@dataclass
class _Waiting:
    phase: Phase
    replies: dict[int, object] = field(default_factory=dict)
    nudged: bool = False


class Simulator:
    def __init__(self, cfg: SimConfig, initial: Value = b""):
        cfg.validate()
        self.cfg = cfg
        self.initial = initial
        self.rng = random.Random(cfg.seed)
        self.now = 0
        self._seqs = itertools.count(1)
        self.recorder = HistoryRecorder(self.tick)
        self._queue: list[tuple[float, int, SimEvent]] = []
        self._next_pid = cfg.clients + 1
        self.servers: dict[int, Server] = {}
        self.tasks: dict[int, ClientTask] = {}
        self.waiting: dict[int, _Waiting] = {}
        self.crash_at: dict[int, int] = {}
        self.crashed: set[int] = set()
        self.held: set[int] = set()
        self._deferred: list[int] = []
        self.log: list[SimEvent] = []
        self.quorums_used: list[frozenset[int]] = []
        self.sent = 0
        self.delivered = 0
        self.dropped = 0
        self.deployment: Deployment | None = None

    def tick(self) -> int:
        self.now = next(self._seqs)
        return self.now

    def allocate(self, count: int) -> list[int]:
        """Reserve process ids for servers; clients own ``1..cfg.clients``."""
        pids = list(range(self._next_pid, self._next_pid + count))
        self._next_pid += count
        return pids

    def add_server(self, pid: int, server: Server):
        self.servers[pid] = server

    def is_client(self, pid: int) -> bool:
        return 1 <= pid <= self.cfg.clients

    # -- scheduling ---------------------------------------------------------

    def _schedule(self, event_kind: EventKind, src: int, dst: int, payload: bytes = b""):
        seq = self.tick()
        if self.cfg.delay_bound is None:
            prio = self.rng.random()
        else:
            prio = seq + self.rng.randint(0, self.cfg.delay_bound)
        heapq.heappush(self._queue, (prio, seq, SimEvent(seq, event_kind, src, dst, payload)))

    def send(self, src: int, dst: int, payload: bytes):
        self.sent += 1
        self._schedule(EventKind.DELIVER, src, dst, payload)

    def spawn(self, pid: int, task: ClientTask):
        """Register a client task; it starts at its first scheduled client step."""
        self.tasks[pid] = task
        self._schedule(EventKind.CLIENT_STEP, pid, pid)

    def hold(self, pid: int):
        """Defer the client's steps until ``release``; in-flight messages still move."""
        self.held.add(pid)

    def release(self, pid: int):
        self.held.discard(pid)
        steps = self._deferred.count(pid)
        self._deferred = [p for p in self._deferred if p != pid]
        for _ in range(steps):
            self._schedule(EventKind.CLIENT_STEP, pid, pid)

    # -- crashes ------------------------------------------------------------

    def crash(self, pid: int, at_event: int = 0):
        """Crash ``pid`` once the logical clock reaches ``at_event``.

        Raises
        ------
        ConfigurationError
            If ``pid`` is not crashable (clients need ``crash_clients``), or
            in liveness mode the protocol's fault budget would be exceeded.
        """
        crashable = self.deployment.crashable if self.deployment else list(self.servers)
        if self.is_client(pid):
            if not self.cfg.crash_clients:
                raise ConfigurationError(f"process {pid} is a client; client crashes need crash_clients")
        elif pid not in crashable:
            raise ConfigurationError(f"process {pid} is not a crashable server")
        if self.cfg.liveness and not self.is_client(pid) and self.deployment is not None:
            planned = {p for p in self.crash_at if not self.is_client(p)} | {pid}
            if len(planned) > self.deployment.fault_budget:
                raise ConfigurationError(
                    f"{len(planned)} server crashes exceed the {self.deployment.name} "
                    f"fault budget of {self.deployment.fault_budget}"
                )
        self.crash_at[pid] = at_event

    def _apply_crashes(self):
        for pid, at in sorted(self.crash_at.items()):
            if pid not in self.crashed and self.now >= at:
                self.crashed.add(pid)
                event = SimEvent(self.tick(), EventKind.CRASH, pid, pid)
                self.log.append(event)
                logger.debug("crash %d at %d", pid, event.seq)

    # -- clients ------------------------------------------------------------

    def _advance(self, pid: int, value=None):
        task = self.tasks[pid]
        while True:
            try:
                step = task.send(value)
            except StopIteration:
                del self.tasks[pid]
                return
            if isinstance(step, Pause):
                self._schedule(EventKind.CLIENT_STEP, pid, pid)
                return
            for dst, payload in step.requests.items():
                self.send(pid, dst, payload)
            if step.need > 0:
                self.waiting[pid] = _Waiting(step)
                return
            value = {}

    def _receive(self, pid: int, src: int, payload: bytes):
        waiting = self.waiting.get(pid)
        if waiting is None or src in waiting.replies:
            return
        decoded = waiting.phase.accept(src, payload)
        if decoded is None:
            logger.debug("p%d discards stale reply from %d", pid, src)
            return
        waiting.replies[src] = decoded
        if len(waiting.replies) >= waiting.phase.need:
            del self.waiting[pid]
            if waiting.phase.quorum:
                self.quorums_used.append(frozenset(waiting.replies))
            self._advance(pid, waiting.replies)

    # -- main loop ------------------------------------------------------------

    def _log(self, event: SimEvent):
        # restamp with the processing time so the log reads in clock order
        self.log.append(replace(event, seq=self.tick()))

    def _process(self, event: SimEvent):
        if event.kind is EventKind.CLIENT_STEP:
            pid = event.dst
            if pid in self.crashed or pid not in self.tasks:
                return
            if pid in self.held:
                self._deferred.append(pid)
                return
            self._log(event)
            self._advance(pid)
            return
        if event.src in self.crashed or event.dst in self.crashed:
            self.dropped += 1
            logger.debug("drop %d -> %d (crashed)", event.src, event.dst)
            return
        self.delivered += 1
        self._log(event)
        server = self.servers.get(event.dst)
        if server is not None:
            for dst, payload in server.handle(event.src, event.payload):
                self.send(event.dst, dst, payload)
        else:
            self._receive(event.dst, event.src, event.payload)

    def _nudge(self) -> bool:
        nudged = False
        for pid, waiting in sorted(self.waiting.items()):
            if pid in self.crashed or waiting.nudged or not waiting.phase.fallback:
                continue
            waiting.nudged = True
            nudged = True
            logger.debug("nudge p%d in %s", pid, waiting.phase.name)
            for dst, payload in waiting.phase.fallback.items():
                self.send(pid, dst, payload)
        return nudged

    def run(self, until: Callable[["Simulator"], bool] | None = None) -> bool:
        """Process events until the queue drains or ``until(self)`` holds.

        Returns True if stopped by ``until``.
        """
        while True:
            self._apply_crashes()
            if not self._queue and not self._nudge():
                return False
            _, _, event = heapq.heappop(self._queue)
            self._process(event)
            if until is not None and until(self):
                return True

    def pending(self) -> list[PendingOperation]:
        pending = []
        for pid in sorted(self.tasks):
            if pid in self.crashed:
                continue
            waiting = self.waiting.get(pid)
            phase = waiting.phase.name if waiting else ""
            ops = [(op_id, op) for op_id, (proc, op) in self.recorder.open.items() if proc == pid]
            if not ops:
                pending.append(PendingOperation(pid, "", 0, phase))
            for op_id, op in ops:
                pending.append(PendingOperation(pid, op.value, op_id, phase))
        return pending

    def run_to_quiescence(self):
        """Run until every live client finished its task.

        Raises
        ------
        NonQuiescenceError
            In liveness mode, if live clients are still pending when no
            event is left to deliver.
        """
        self.run()
        pending = self.pending()
        if pending and self.cfg.liveness:
            raise NonQuiescenceError(pending)
        logger.debug("quiescent: sent=%d delivered=%d dropped=%d", self.sent, self.delivered, self.dropped)

    # -- queries ------------------------------------------------------------

    @property
    def accounted(self) -> bool:
        """Every sent message was delivered or dropped (meaningful once the queue drained)."""
        return self.sent == self.delivered + self.dropped + len(
            [e for _, _, e in self._queue if e.kind is EventKind.DELIVER]
        )

    def quorums_intersect(self) -> bool:
        return all(intersects(a, b) for a, b in itertools.combinations(set(self.quorums_used), 2))

    def completed(self, pid: int, op: OpKind) -> int:
        """Number of ``op`` operations ``pid`` has completed so far."""
        return sum(
            1 for e in self.recorder.events
            if e.proc == pid and e.op is op and e.result is not None
        )

    def history(self) -> History:
        return self.recorder.history(self.initial)

    def events_text(self) -> str:
        return "\n".join([EVENTS_HEADER, *(e.to_line() for e in self.log)]) + "\n"


def random_crashes(sim: Simulator, count: int, total_ops: int):
    """Crash ``count`` distinct crashable servers at seeded points of the run."""
    candidates = sorted(sim.deployment.crashable)
    if count > len(candidates):
        raise ConfigurationError(f"cannot crash {count} of {len(candidates)} servers")
    horizon = max(1, CRASH_HORIZON_PER_OP * total_ops)
    for pid in sim.rng.sample(candidates, count):
        sim.crash(pid, sim.rng.randint(0, horizon))


def prepare(
    cfg: SimConfig,
    workload: dict[int, list] | None = None,
    deployment: Deployment | None = None,
    initial: Value = b"",
) -> Simulator:
    """Build a simulator with servers installed, clients spawned and crashes planned."""
    from covreg.workload import client_task, random_workload

    if deployment is None:
        from covreg.vmwabd import VmwabdDeployment

        deployment = VmwabdDeployment(cfg.replicas)
    sim = Simulator(cfg, initial)
    sim.deployment = deployment
    if cfg.liveness and cfg.crashes > deployment.fault_budget:
        raise ConfigurationError(
            f"{cfg.crashes} crashes exceed the {deployment.name} fault budget of {deployment.fault_budget}"
        )
    deployment.install(sim)
    if workload is None:
        workload = random_workload(cfg)
    for pid in sorted(workload):
        if not sim.is_client(pid):
            raise ConfigurationError(f"workload names process {pid}, but clients are 1..{cfg.clients}")
        sim.spawn(pid, client_task(deployment.client(sim, pid), workload[pid]))
    random_crashes(sim, cfg.crashes, sum(len(steps) for steps in workload.values()))
    return sim


def sim_run(
    cfg: SimConfig,
    workload: dict[int, list] | None = None,
    deployment: Deployment | None = None,
    initial: Value = b"",
) -> History:
    """Run a workload to quiescence and return its history.

    Identical arguments yield an identical history.
    """
    sim = prepare(cfg, workload, deployment, initial)
    sim.run_to_quiescence()
    return sim.history()
