#!/usr/bin/env python
"""covreg command line: simulate protocols, check histories, run demos."""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import click
from click import Choice, argument, group, option

from covreg.defaults import (
    DEFAULT_CHECK_JOBS,
    DEFAULT_CRASHES,
    DEFAULT_DEMO_CONTEND,
    DEFAULT_DEMO_PROCS,
    DEFAULT_DIRECTORIES,
    DEFAULT_LDR_F,
    DEFAULT_OPS_PER_CLIENT,
    DEFAULT_PROTOCOL,
    DEFAULT_READERS,
    DEFAULT_REPLICAS,
    DEFAULT_SEED,
    DEFAULT_WRITERS,
    EXIT_OK,
    EXIT_PROPERTY_FAILURE,
    PROTOCOLS,
)
from covreg.errors import ConfigurationError, CovregError, exit_code_for
from covreg.history import History, OpKind, decode_value
from covreg.log_constants import PREFIX_DECIDED, PREFIX_FILE, PREFIX_LOWER_RANK_COMMIT, PREFIX_RMW
from covreg.simnet import SimConfig, Simulator

logger = logging.getLogger(__name__)

APP_PROPERTIES = ("rmw", "consensus")
DEMOS = ("rmw", "file", "consensus", "ranked")


@dataclass
class ScenarioConfig:
    """A simulation: run parameters, protocol, and where the workload comes from.

    ``workload_path`` of None means a seeded random workload.
    """

    sim: SimConfig = field(default_factory=SimConfig)
    protocol: str = DEFAULT_PROTOCOL
    workload_path: str | None = None
    f: int = DEFAULT_LDR_F
    directories: int = DEFAULT_DIRECTORIES

    @property
    def workload(self) -> str:
        return "random" if self.workload_path is None else "scripted"

    def validate(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigurationError(f"unknown protocol {self.protocol!r}; expected one of {PROTOCOLS}")
        self.sim.validate()

    def deployment(self):
        if self.protocol == "ldr":
            from covreg.ldr import LdrDeployment

            return LdrDeployment(self.f, self.directories)
        if self.protocol == "strongtr":
            from covreg.consensus import StrongDeployment

            return StrongDeployment()
        from covreg.vmwabd import VmwabdDeployment

        return VmwabdDeployment(self.sim.replicas)

    def build(self) -> Simulator:
        from covreg.simnet import prepare
        from covreg.workload import load_workload

        self.validate()
        if self.workload_path is None:
            return prepare(self.sim, None, self.deployment())
        scripted = load_workload(self.workload_path)
        return prepare(self.sim, scripted.clients, self.deployment(), scripted.initial)


def _show(value: bytes) -> str:
    return value.decode("utf-8", "backslashreplace")


def _fail(error: Exception):
    click.echo(f"error: {error}", err=True)
    raise SystemExit(exit_code_for(error))


@group()
@option("-v", "--verbose", is_flag=True, help="Log simulator and checker decisions")
def cli(verbose):
    """Coverable register protocols, simulator and history checker."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@cli.command("sim")
@option("--protocol", type=Choice(PROTOCOLS), default=DEFAULT_PROTOCOL, help="Register protocol to simulate")
@option("--replicas", default=DEFAULT_REPLICAS, help="Replica servers (vmwabd)")
@option("--writers", default=DEFAULT_WRITERS, help="Writer clients")
@option("--readers", default=DEFAULT_READERS, help="Reader clients")
@option("--ops", default=DEFAULT_OPS_PER_CLIENT, help="Operations per client")
@option("--crashes", default=DEFAULT_CRASHES, help="Servers crashed at seeded points")
@option("--seed", default=DEFAULT_SEED, help="Scheduling seed")
@option("--delay-bound", type=int, default=None, help="Cap on message reordering, in scheduling steps")
@option("--f", "f", default=DEFAULT_LDR_F, help="Tolerated replica crashes (ldr)")
@option("--directories", default=DEFAULT_DIRECTORIES, help="Directory servers (ldr)")
@option("--workload", "workload_path", default=None, help="Scripted workload JSON file")
@option("--crash-clients", is_flag=True, help="Allow clients to crash")
@option("--out", default=None, help="History file to write (default: stdout)")
@option("--events", default=None, help="Also write the simulator event log here")
def sim(protocol, replicas, writers, readers, ops, crashes, seed, delay_bound, f, directories,
        workload_path, crash_clients, out, events):
    """Run a simulation and emit its history."""
    scenario = ScenarioConfig(
        SimConfig(
            seed=seed,
            replicas=replicas,
            writers=writers,
            readers=readers,
            ops_per_client=ops,
            crashes=crashes,
            delay_bound=delay_bound,
            crash_clients=crash_clients,
        ),
        protocol=protocol,
        workload_path=workload_path,
        f=f,
        directories=directories,
    )
    try:
        simulator = scenario.build()
        simulator.run_to_quiescence()
        text = simulator.history().emit()
        if out:
            Path(out).write_text(text)
            logger.info("wrote %d events to %s", len(simulator.recorder.events), out)
        else:
            click.echo(text, nl=False)
        if events:
            Path(events).write_text(simulator.events_text())
    except (CovregError, OSError) as e:
        _fail(e)


def parse_props(props: str) -> list[str]:
    from covreg.checker import PROPERTIES

    names = [p.strip() for p in props.split(",") if p.strip()]
    if names == ["all"]:
        return list(PROPERTIES)
    unknown = [p for p in names if p not in PROPERTIES + APP_PROPERTIES]
    if unknown or not names:
        raise ConfigurationError(
            f"unknown properties {unknown}; choose from {', '.join(PROPERTIES + APP_PROPERTIES)} or all"
        )
    return names


def run_checks(h: History, props: list[str], oracle: bool = False) -> list:
    """Register properties in their fixed order, then application properties."""
    from covreg.apps import check_rmw
    from covreg.checker import check_history
    from covreg.consensus import check_consensus

    verdicts = check_history(h, [p for p in props if p not in APP_PROPERTIES], oracle=oracle)
    if "rmw" in props:
        verdicts.append(check_rmw(h))
    if "consensus" in props:
        verdicts.extend(check_consensus(h))
    return verdicts


def _check_file(path: str, props: list[str], oracle: bool):
    try:
        return run_checks(History.load(path), props, oracle), None
    except (CovregError, OSError) as e:
        return None, e


@cli.command("check")
@argument("files", nargs=-1, required=True)
@option("--props", default="atomicity,validity,consolidation,continuity,evolution",
        help="Comma-separated properties, or 'all'")
@option("--oracle", is_flag=True, help="Cross-check atomicity by brute force on small histories")
@option("--annotate", is_flag=True, help="Emit GitHub Actions annotations for failures")
@option("--summary", "summary_path", default=None, help="Append a markdown verdict table to this file")
@option("--jobs", default=DEFAULT_CHECK_JOBS, help="Histories checked in parallel")
def check(files, props, oracle, annotate, summary_path, jobs):
    """Check history files; exit 0 iff every property holds."""
    from covreg.annotations import emit_verdict_annotations, format_verdict_summary, write_summary

    try:
        wanted = parse_props(props)
    except ConfigurationError as e:
        _fail(e)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        outcomes = list(pool.map(lambda p: _check_file(p, wanted, oracle), files))

    code = EXIT_OK
    results = {}
    for path, (verdicts, error) in zip(files, outcomes):
        if len(files) > 1:
            click.echo(f"== {path}")
        if error is not None:
            click.echo(f"error: {error}", err=True)
            code = max(code, exit_code_for(error))
            continue
        results[path] = verdicts
        for v in verdicts:
            for line in v.report():
                click.echo(line)
        if annotate:
            emit_verdict_annotations(path, verdicts)
        if not all(v.passed for v in verdicts):
            code = max(code, EXIT_PROPERTY_FAILURE)
    if summary_path and results:
        write_summary(summary_path, format_verdict_summary(results))
    raise SystemExit(code)


@cli.command("tree")
@argument("history")
def tree(history):
    """Draw the version tree of a history."""
    from covreg.checker import build_version_tree, render_tree

    try:
        click.echo(render_tree(build_version_tree(History.load(history))), nl=False)
    except (CovregError, OSError) as e:
        _fail(e)


# -- demos --------------------------------------------------------------------


def demo_rmw(seed: int, contend: int) -> tuple[list[str], list]:
    """``contend`` clients each append their id with one concurrent rmw."""
    from covreg.apps import rmw
    from covreg.vmwabd import VmwabdDeployment

    cfg = SimConfig(seed=seed, writers=contend)
    simulator = Simulator(cfg)
    deployment = VmwabdDeployment(cfg.replicas)
    simulator.deployment = deployment
    deployment.install(simulator)
    outcomes = {}

    def task(pid):
        client = deployment.client(simulator, pid)
        outcomes[pid] = yield from rmw(client, f"append:{str(pid).encode().hex()}")

    for pid in range(1, contend + 1):
        simulator.spawn(pid, task(pid))
    simulator.run_to_quiescence()
    lines = [
        f"{PREFIX_RMW} p{pid} append {pid} -> {o.status.value} {_show(o.value)!r}"
        for pid, o in sorted(outcomes.items())
    ]
    return lines, run_checks(simulator.history(), ["atomicity", "validity", "consolidation", "rmw"])


def demo_file(seed: int, procs: int) -> tuple[list[str], list]:
    """``procs`` writers append a chunk each to one file, rebasing until accepted."""
    from covreg.apps import file_append, file_get
    from covreg.vmwabd import VmwabdDeployment

    cfg = SimConfig(seed=seed, writers=procs)
    simulator = Simulator(cfg)
    deployment = VmwabdDeployment(cfg.replicas)
    simulator.deployment = deployment
    deployment.install(simulator)
    revisions, final = {}, {}

    def append(pid):
        revisions[pid] = yield from file_append(deployment.client(simulator, pid), f"[p{pid}]".encode())

    def get(pid):
        final["content"], final["tag"] = yield from file_get(deployment.client(simulator, pid))

    for pid in range(1, procs + 1):
        simulator.spawn(pid, append(pid))
    simulator.run_to_quiescence()
    simulator.spawn(1, get(1))
    simulator.run_to_quiescence()
    lines = [f"{PREFIX_FILE} p{pid} appended after {n} revisions" for pid, n in sorted(revisions.items())]
    lines.append(f"{PREFIX_FILE} final {final['tag']} {_show(final['content'])!r}")
    return lines, run_checks(simulator.history(), ["atomicity", "validity", "consolidation", "continuity", "evolution"])


def demo_consensus(seed: int, procs: int) -> tuple[list[str], list]:
    """``procs`` processes propose on a strongly coverable register over the local oracle."""
    from covreg.consensus import StrongDeployment
    from covreg.simnet import prepare
    from covreg.workload import consensus_workload

    cfg = SimConfig(seed=seed, writers=procs)
    simulator = prepare(cfg, consensus_workload(procs), StrongDeployment())
    simulator.run_to_quiescence()
    h = simulator.history()
    lines = []
    for op in h.operations({OpKind.PROPOSE}):
        proposed = decode_value(json.loads(op.args)[0])
        decided = decode_value(json.loads(op.result)[0])
        lines.append(f"p{op.proc} proposed {_show(proposed)!r}")
        lines.append(f"{PREFIX_DECIDED} {_show(decided)} (p{op.proc})")
    return lines, run_checks(h, ["atomicity", "validity", "strong", "consensus"])


def demo_ranked(seed: int) -> tuple[list[str], list]:
    """Search for and print a schedule where a lower rank commits after a higher one."""
    from covreg.ranked import check_non_triviality, check_safety, find_lower_rank_commit, transcript

    found = find_lower_rank_commit(seed)
    if found is None:
        raise CovregError("no lower-rank commit found in the searched schedules")
    schedule_seed, schedule, records = found
    lines = transcript(schedule, records)
    lines.append(f"{PREFIX_LOWER_RANK_COMMIT} rank 2 committed after rank 5 (schedule seed {schedule_seed})")
    return lines, [check_safety(records), check_non_triviality(records)]


@cli.command("demo")
@argument("which", type=Choice(DEMOS))
@option("--procs", default=DEFAULT_DEMO_PROCS, help="Participating processes")
@option("--seed", default=DEFAULT_SEED, help="Scheduling seed")
@option("--contend", default=DEFAULT_DEMO_CONTEND, help="Concurrent rmw operations")
def demo(which, procs, seed, contend):
    """Run a canonical scenario and print its transcript and verdicts."""
    try:
        if which == "rmw":
            lines, verdicts = demo_rmw(seed, contend)
        elif which == "file":
            lines, verdicts = demo_file(seed, procs)
        elif which == "consensus":
            lines, verdicts = demo_consensus(seed, procs)
        else:
            lines, verdicts = demo_ranked(seed)
    except CovregError as e:
        _fail(e)
    for line in lines:
        click.echo(line)
    for v in verdicts:
        click.echo(v.line())
    raise SystemExit(EXIT_OK if all(v.passed for v in verdicts) else EXIT_PROPERTY_FAILURE)


if __name__ == "__main__":
    cli()
