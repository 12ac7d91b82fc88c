import itertools

import pytest

from covreg.checker import STRONG, build_version_tree, check_history, check_strong_coverability, depth_matches_ts
from covreg.core import TAG0, Flag, Tag
from covreg.errors import ReservedWriterError
from covreg.history import HistoryRecorder
from covreg.simnet import SimConfig, prepare, sim_run
from covreg.vmwabd import Message, MessageKind, ReplicaState, VmwabdClient, replica_handle

REPLICAS = [10, 11, 12]


def deliver(phase, states, chosen):
    """Hand a phase's requests to the chosen replicas and collect their accepted replies"""
    replies = {}
    for pid in chosen:
        reply, states[pid] = replica_handle(Message.decode(phase.requests[pid]), states[pid])
        replies[pid] = phase.accept(pid, reply.encode())
    return replies


def finish(op, replies):
    with pytest.raises(StopIteration) as stop:
        op.send(replies)
    return stop.value.value


@pytest.fixture(scope="function")
def states():
    return {pid: ReplicaState(TAG0, b"") for pid in REPLICAS}


def test_replica_adopts_only_larger_tags():
    """Propagations are acknowledged whether or not they replace the local pair"""
    st = ReplicaState(Tag(2, 1), b"x")
    ack, kept = replica_handle(Message(MessageKind.PROPAGATE, 1, Tag(1, 5), b"old"), st)
    assert ack.kind is MessageKind.PROPAGATE_ACK
    assert kept == st
    _, newer = replica_handle(Message(MessageKind.PROPAGATE, 2, Tag(2, 3), b"new"), st)
    assert newer == ReplicaState(Tag(2, 3), b"new")
    reply, same = replica_handle(Message(MessageKind.QUERY, 3), newer)
    assert (reply.kind, reply.tag, reply.value) == (MessageKind.QUERY_REPLY, Tag(2, 3), b"new")
    assert same == newer


def test_sequential_writes(states):
    """A write on the current version changes it; a write on a stale one reports the current pair"""
    rec = HistoryRecorder()
    client = VmwabdClient(1, rec, REPLICAS)
    op = client.cvr_write(b"a", TAG0)
    phase = op.send(None)
    phase = op.send(deliver(phase, states, [10, 11]))
    first = finish(op, deliver(phase, states, [10, 11]))
    assert (first.value, first.tag, first.flag) == (b"a", Tag(1, 1), Flag.CHG)
    assert client.last_tag == Tag(1, 1)

    op = client.cvr_write(b"b", TAG0)
    phase = op.send(None)
    phase = op.send(deliver(phase, states, [11, 12]))
    second = finish(op, deliver(phase, states, [11, 12]))
    assert (second.value, second.tag, second.flag) == (b"a", Tag(1, 1), Flag.UNCHG)
    assert states[12] == ReplicaState(Tag(1, 1), b"a")


def test_concurrent_writers_both_change(states):
    """Two writers revising the same version through overlapping quorums can both succeed"""
    rec = HistoryRecorder()
    a = VmwabdClient(1, rec, REPLICAS).cvr_write(b"a", TAG0)
    b = VmwabdClient(2, rec, REPLICAS).cvr_write(b"b", TAG0)
    pa, pb = a.send(None), b.send(None)
    pa = a.send(deliver(pa, states, [10, 11]))
    pb = b.send(deliver(pb, states, [11, 12]))
    out_a = finish(a, deliver(pa, states, [10, 11]))
    out_b = finish(b, deliver(pb, states, [11, 12]))
    assert out_a.flag is Flag.CHG and out_b.flag is Flag.CHG
    assert (out_a.tag, out_b.tag) == (Tag(1, 1), Tag(1, 2))

    reader = VmwabdClient(3, rec, REPLICAS)
    op = reader.cvr_read()
    phase = op.send(None)
    phase = op.send(deliver(phase, states, [10, 11]))
    assert finish(op, deliver(phase, states, [10, 11])) == (b"b", Tag(1, 2))

    h = rec.history()
    assert all(v.passed for v in check_history(h))
    strong = check_strong_coverability(h)
    assert (strong.property, strong.passed, strong.reason) == (STRONG, False, "branch")


def test_reserved_writer_cannot_write():
    op = VmwabdClient(0, HistoryRecorder(), REPLICAS).cvr_write(b"a", TAG0)
    with pytest.raises(ReservedWriterError):
        op.send(None)


def test_replica_tags_never_decrease():
    sim = prepare(SimConfig(seed=21, replicas=5, writers=3, readers=2, ops_per_client=3, crashes=1))
    sim.run_to_quiescence()
    for trace in sim.deployment.traces().values():
        assert all(a <= b for a, b in itertools.pairwise(trace))


@pytest.mark.parametrize("seed", range(25))
def test_random_runs_satisfy_every_property(seed):
    """Seeded runs with crashes and reordering pass atomicity and weak coverability"""
    cfg = SimConfig(seed=seed, replicas=5, writers=3, readers=2, ops_per_client=3, crashes=seed % 3)
    sim = prepare(cfg)
    sim.run_to_quiescence()
    verdicts = check_history(sim.history(), oracle=True)
    assert [v.line() for v in verdicts if not v.passed] == []
    assert depth_matches_ts(build_version_tree(sim.history()))


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(200))
def test_random_runs_with_bounded_delay(seed):
    cfg = SimConfig(seed=seed, replicas=7, writers=4, readers=3, ops_per_client=4, crashes=seed % 4, delay_bound=seed % 6)
    h = sim_run(cfg)
    verdicts = check_history(h)
    assert [v.line() for v in verdicts if not v.passed] == []
    assert depth_matches_ts(build_version_tree(h))