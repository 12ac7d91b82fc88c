import pytest

from covreg.checker import STRONG, check_history, check_strong_coverability
from covreg.consensus import (
    AGREEMENT,
    TERMINATION,
    VALIDITY,
    ConsensusOracle,
    OracleServer,
    Proposal,
    StrongDeployment,
    check_consensus,
    encode_propose,
    generate_version,
)
from covreg.core import TAG0, Flag, Tag
from covreg.simnet import SimConfig, Simulator, prepare
from covreg.wire import Reader
from covreg.workload import consensus_workload


def test_oracle_first_proposal_wins():
    oracle = ConsensusOracle()
    assert oracle.propose(TAG0, None) is None
    first = Proposal(b"a", Tag(1, 1))
    assert oracle.propose(TAG0, first) == first
    assert oracle.propose(TAG0, Proposal(b"b", Tag(1, 2))) == first
    assert oracle.propose(Tag(1, 1), None) is None


def test_oracle_server_replies_with_decision():
    server = OracleServer(9)
    ((dst, payload),) = server.handle(3, encode_propose(1, TAG0, Proposal(b"a", Tag(1, 3))))
    assert dst == 3
    r = Reader(payload)
    assert r.op_id == 1
    assert r.flag()
    assert r.tag() == Tag(1, 3)
    assert r.value() == b"a"


def test_generate_version_extends_chain():
    assert generate_version(Tag(2, 1), 4) == Tag(3, 4)


@pytest.mark.parametrize("seed", range(10))
def test_proposers_agree(seed):
    """Everybody decides the value of the single write that changed the initial version"""
    sim = prepare(SimConfig(seed=seed, writers=5), consensus_workload(5), StrongDeployment())
    sim.run_to_quiescence()
    h = sim.history()
    assert [v.passed for v in check_consensus(h)] == [True, True, True]
    assert check_strong_coverability(h).passed
    assert all(v.passed for v in check_history(h))
    chg = [o for o in h.register_ops() if o.is_chg]
    assert len(chg) == 1


def test_strong_register_random_workload():
    """Writers and readers on the oracle-backed register never branch"""
    cfg = SimConfig(seed=4, writers=3, readers=2, ops_per_client=4)
    sim = prepare(cfg, None, StrongDeployment())
    sim.run_to_quiescence()
    verdicts = check_history(sim.history(), [STRONG, "atomicity", "validity", "consolidation", "evolution"])
    assert [v.line() for v in verdicts if not v.passed] == []


def test_write_on_old_version_chases_to_frontier():
    """A losing write reports the newest decided pair, not the one it collided with"""
    deployment = StrongDeployment()
    sim = Simulator(SimConfig(writers=2))
    sim.deployment = deployment
    deployment.install(sim)
    results = []

    def first():
        client = deployment.client(sim, 1)
        yield from client.cvr_write(b"a", TAG0)
        yield from client.cvr_write(b"b", Tag(1, 1))

    def second():
        results.append((yield from deployment.client(sim, 2).cvr_write(b"z", TAG0)))

    sim.spawn(1, first())
    sim.run_to_quiescence()
    sim.spawn(2, second())
    sim.run_to_quiescence()
    (outcome,) = results
    assert (outcome.value, outcome.tag, outcome.flag) == (b"b", Tag(2, 1), Flag.UNCHG)


def test_consensus_fixture_disagreement(load_history):
    agreement, validity, termination = check_consensus(load_history("consensus.log"))
    assert (agreement.property, agreement.passed, agreement.reason) == (AGREEMENT, False, "disagree")
    assert validity.property == VALIDITY and validity.passed
    assert termination.property == TERMINATION and termination.passed


def test_read_after_single_write():
    """A read walks to the undecided frontier and returns the only written pair"""
    deployment = StrongDeployment()
    sim = Simulator(SimConfig(writers=1, readers=1))
    sim.deployment = deployment
    deployment.install(sim)
    results = []

    def write():
        yield from deployment.client(sim, 1).cvr_write(b"a", TAG0)

    def read():
        results.append((yield from deployment.client(sim, 2).cvr_read()))

    sim.spawn(1, write())
    sim.run_to_quiescence()
    sim.spawn(2, read())
    sim.run_to_quiescence()
    assert results == [(b"a", Tag(1, 1))]
    assert sim.pending() == []
