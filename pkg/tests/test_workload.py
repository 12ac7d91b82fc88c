import pytest

from covreg.core import TAG0
from covreg.errors import HistoryFormatError
from covreg.history import OpKind
from covreg.simnet import SimConfig, sim_run
from covreg.workload import Step, consensus_workload, load_workload, random_workload, rmw_workload


def test_random_workload_roles():
    """Writers write their own values over their last version; readers only read"""
    workload = random_workload(SimConfig(writers=2, readers=1, ops_per_client=2))
    assert workload[1] == [Step(OpKind.CVR_WRITE, b"1:0"), Step(OpKind.CVR_WRITE, b"1:1")]
    assert workload[3] == [Step(OpKind.CVR_READ), Step(OpKind.CVR_READ)]


def test_generated_workloads():
    assert rmw_workload(SimConfig(writers=1, readers=1), "upper")[2] == [Step(OpKind.RMW, modifier="upper")]
    assert consensus_workload(2) == {1: [Step(OpKind.PROPOSE, b"v1")], 2: [Step(OpKind.PROPOSE, b"v2")]}


def test_load_workload(fixtures_dir):
    workload = load_workload(fixtures_dir / "workload.json")
    assert workload.initial == b"v0."
    first, second = workload.clients[1]
    assert (first.op, first.value, first.ver) == (OpKind.CVR_WRITE, b"a", TAG0)
    assert second.ver is None
    assert workload.clients[2][1] == Step(OpKind.RMW, modifier="upper")


def test_scripted_run(fixtures_dir):
    """A scripted workload runs against the initial value it names"""
    workload = load_workload(fixtures_dir / "workload.json")
    h = sim_run(SimConfig(seed=2, replicas=3, writers=1, readers=1), workload.clients, initial=workload.initial)
    assert h.initial == b"v0."
    assert {o.op for o in h.operations()} == {OpKind.CVR_WRITE, OpKind.CVR_READ, OpKind.RMW}
    assert all(o.complete for o in h.operations())


@pytest.mark.parametrize(
    "text, match",
    [
        ("not json", "Expecting value"),
        ('{"clients": {"1": [{"op": "cas"}]}}', "client 1 step 0"),
        ('{"clients": {"1": [{"op": "rmw"}]}}', "needs a modifier"),
        ('{"clients": {"1": [{"op": "cvr-write", "ver": [1]}]}}', "two-element"),
        ('{"initial": "zz", "clients": {}}', "non-hexadecimal"),
        ("{}", "clients"),
    ],
)
def test_bad_workload(tmp_path, text, match):
    path = tmp_path / "bad.json"
    path.write_text(text)
    with pytest.raises(HistoryFormatError, match=match):
        load_workload(path)
