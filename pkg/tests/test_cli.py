import pytest
from click.testing import CliRunner

from covreg.cli import ScenarioConfig, cli, parse_props
from covreg.defaults import DEFAULT_CHECK_JOBS
from covreg.errors import ConfigurationError
from covreg.history import History
from covreg.log_constants import EVENTS_HEADER, HISTORY_HEADER, PREFIX_DECIDED, PREFIX_LOWER_RANK_COMMIT
from covreg.simnet import SimConfig


@pytest.fixture(scope="function")
def runner():
    return CliRunner()


def fixture(fixtures_dir, name):
    return str(fixtures_dir / name)


def test_sim_writes_history(runner):
    result = runner.invoke(cli, ["sim", "--writers", "2", "--readers", "1", "--ops", "2", "--seed", "3"])
    assert result.exit_code == 0, result.output
    assert result.output.startswith(HISTORY_HEADER)
    assert len(History.parse(result.output).operations()) == 6


def test_sim_is_deterministic(runner):
    args = ["sim", "--writers", "3", "--readers", "2", "--ops", "2", "--crashes", "2", "--seed", "17"]
    assert runner.invoke(cli, args).output == runner.invoke(cli, args).output


def test_sim_then_check(runner, tmp_path):
    """A simulated vmwabd history passes every default property"""
    out = tmp_path / "run.log"
    events = tmp_path / "run.events"
    result = runner.invoke(cli, [
        "sim", "--writers", "3", "--readers", "2", "--ops", "3", "--crashes", "1",
        "--seed", "5", "--out", str(out), "--events", str(events),
    ])
    assert result.exit_code == 0, result.output
    assert events.read_text().startswith(EVENTS_HEADER)
    result = runner.invoke(cli, ["check", str(out)])
    assert result.exit_code == 0, result.output
    assert result.output.splitlines() == [
        "atomicity: PASS",
        "validity: PASS",
        "consolidation: PASS",
        "continuity: PASS",
        "evolution: PASS",
    ]


@pytest.mark.parametrize("protocol, props", [("ldr", "atomicity,validity,consolidation,continuity,evolution"), ("strongtr", "all")])
def test_sim_other_protocols(runner, tmp_path, protocol, props):
    out = tmp_path / f"{protocol}.log"
    result = runner.invoke(cli, ["sim", "--protocol", protocol, "--writers", "2", "--readers", "2", "--ops", "2", "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert runner.invoke(cli, ["check", str(out), "--props", props]).exit_code == 0


def test_sim_scripted_workload(runner, fixtures_dir):
    result = runner.invoke(cli, ["sim", "--readers", "1", "--workload", fixture(fixtures_dir, "workload.json")])
    assert result.exit_code == 0, result.output
    assert History.parse(result.output).initial == b"v0."


@pytest.mark.parametrize(
    "args",
    [
        ["--replicas", "5", "--crashes", "3"],
        ["--protocol", "strongtr", "--crashes", "1"],
        ["--protocol", "ldr", "--f", "1", "--crashes", "2"],
        ["--replicas", "0"],
    ],
)
def test_sim_rejects_bad_configuration(runner, args):
    result = runner.invoke(cli, ["sim", *args])
    assert result.exit_code == 2
    assert "error:" in result.output


def test_sim_missing_workload(runner, tmp_path):
    result = runner.invoke(cli, ["sim", "--workload", str(tmp_path / "missing.json")])
    assert result.exit_code == 3


def test_check_reports_counterexample(runner, fixtures_dir, snapshot):
    result = runner.invoke(cli, ["check", fixture(fixtures_dir, "new_old_inversion.log")])
    assert result.exit_code == 1
    assert result.output.rstrip("\n") == snapshot


def test_check_oracle(runner, fixtures_dir):
    result = runner.invoke(cli, ["check", "--oracle", "--props", "atomicity", fixture(fixtures_dir, "good.log")])
    assert result.exit_code == 0
    assert result.output.splitlines() == ["atomicity: PASS", "oracle: PASS"]


def test_check_app_properties(runner, fixtures_dir):
    result = runner.invoke(cli, ["check", "--props", "consensus", fixture(fixtures_dir, "consensus.log")])
    assert result.exit_code == 1
    assert result.output.startswith("c-agreement: FAIL (disagree)")
    result = runner.invoke(cli, ["check", "--props", "atomicity,rmw", fixture(fixtures_dir, "rmw_contended.log")])
    assert result.exit_code == 0
    assert result.output.splitlines() == ["atomicity: PASS", "rmw: PASS"]


def test_check_several_files(runner, fixtures_dir):
    good, bad = fixture(fixtures_dir, "good.log"), fixture(fixtures_dir, "wrong_value.log")
    result = runner.invoke(cli, ["check", "--props", "atomicity", good, bad])
    assert result.exit_code == 1
    lines = result.output.splitlines()
    assert lines[:3] == [f"== {good}", "atomicity: PASS", f"== {bad}"]
    assert lines[3].startswith("atomicity: FAIL (wrong-value)")


def test_check_jobs_default():
    """The parallelism default comes from the shared defaults module"""
    jobs = next(p for p in cli.commands["check"].params if p.name == "jobs")
    assert jobs.default == DEFAULT_CHECK_JOBS


def test_check_malformed(runner, fixtures_dir):
    result = runner.invoke(cli, ["check", fixture(fixtures_dir, "malformed.log")])
    assert result.exit_code == 3
    assert "expected 7 fields" in result.output


def test_check_unpaired(runner, fixtures_dir):
    assert runner.invoke(cli, ["check", fixture(fixtures_dir, "unpaired.log")]).exit_code == 3


def test_check_missing_file(runner, tmp_path):
    assert runner.invoke(cli, ["check", str(tmp_path / "nope.log")]).exit_code == 3


def test_binary_history_is_a_parse_error(runner, tmp_path):
    """Bytes that are not UTF-8 are reported like any other unreadable history"""
    bad = tmp_path / "bad.hist"
    bad.write_bytes(b"\xff\xfe")
    result = runner.invoke(cli, ["check", str(bad)])
    assert result.exit_code == 3
    assert "not UTF-8" in result.output
    assert runner.invoke(cli, ["tree", str(bad)]).exit_code == 3


def test_check_unknown_property(runner, fixtures_dir):
    result = runner.invoke(cli, ["check", "--props", "atomicity,liveness", fixture(fixtures_dir, "good.log")])
    assert result.exit_code == 2
    assert "liveness" in result.output


def test_check_annotations_and_summary(runner, fixtures_dir, tmp_path):
    summary = tmp_path / "summary.md"
    result = runner.invoke(cli, [
        "check", "--annotate", "--summary", str(summary), fixture(fixtures_dir, "wrong_value.log"),
    ])
    assert result.exit_code == 1
    assert "::error title=atomicity violated::" in result.output
    text = summary.read_text()
    assert "## History Verdicts" in text
    assert "❌ wrong-value" in text


def test_tree_of_branching_history(runner, fixtures_dir, snapshot):
    result = runner.invoke(cli, ["tree", fixture(fixtures_dir, "branch.log")])
    assert result.exit_code == 0
    assert result.output.rstrip("\n") == snapshot


def test_tree_disconnected(runner, fixtures_dir):
    result = runner.invoke(cli, ["tree", fixture(fixtures_dir, "orphan.log")])
    assert result.exit_code == 1
    assert "unreachable" in result.output


def test_demo_consensus(runner):
    """Every process decides the same value"""
    result = runner.invoke(cli, ["demo", "consensus", "--procs", "5", "--seed", "1"])
    assert result.exit_code == 0, result.output
    decided = {line.split(" ")[1] for line in result.output.splitlines() if line.startswith(PREFIX_DECIDED)}
    assert len(decided) == 1
    assert decided <= {f"v{pid}" for pid in range(1, 6)}
    assert "c-agreement: PASS" in result.output


def test_demo_rmw(runner):
    result = runner.invoke(cli, ["demo", "rmw", "--contend", "3", "--seed", "2"])
    assert result.exit_code == 0, result.output
    outcomes = [line for line in result.output.splitlines() if line.startswith("rmw p")]
    assert len(outcomes) == 3
    assert any(" success " in line for line in outcomes)
    assert "rmw: PASS" in result.output


def test_demo_file(runner):
    result = runner.invoke(cli, ["demo", "file", "--procs", "3", "--seed", "4"])
    assert result.exit_code == 0, result.output
    assert "file final (" in result.output


def test_demo_ranked(runner):
    result = runner.invoke(cli, ["demo", "ranked", "--seed", "0"])
    assert result.exit_code == 0, result.output
    assert any(line.startswith(PREFIX_LOWER_RANK_COMMIT) for line in result.output.splitlines())
    assert "rr-safety: PASS" in result.output


def test_parse_props():
    assert parse_props("all")[-1] == "barrier"
    assert parse_props(" atomicity , rmw ") == ["atomicity", "rmw"]
    with pytest.raises(ConfigurationError):
        parse_props(",")


def test_scenario_deployments():
    assert ScenarioConfig(SimConfig(replicas=7)).deployment().replicas == 7
    assert ScenarioConfig(protocol="ldr", f=2).deployment().replicas == 6
    assert ScenarioConfig(protocol="strongtr").deployment().name == "strongtr"
    assert ScenarioConfig().workload == "random"
    with pytest.raises(ConfigurationError):
        ScenarioConfig(protocol="paxos").validate()
