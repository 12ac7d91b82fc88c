#!/usr/bin/env python3
"""
Run seeded simulation campaigns and check every resulting history.

Usage:
    campaign.py [CAMPAIGN ...] [--seeds N] [--first-seed S] [--json]
    campaign.py --help
"""

import argparse
import json
import random
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from functools import partial

from covreg.apps import check_rmw
from covreg.checker import (
    DEFAULT_PROPERTIES,
    PROPERTIES,
    brute_force_linearizable,
    build_version_tree,
    check_atomicity,
    check_history,
    depth_matches_ts,
)
from covreg.consensus import StrongDeployment, check_consensus
from covreg.ldr import LdrDeployment
from covreg.ranked import Policy, RankedRegister, check_non_triviality, check_safety, lower_rank_commit, random_schedule, run_schedule
from covreg.simnet import SimConfig, sim_run
from covreg.vmwabd import VmwabdDeployment
from covreg.workload import consensus_workload, forged_history, rmw_workload

err = partial(print, file=sys.stderr)


def random_config(seed: int, replicas: int = 5) -> SimConfig:
    """Vary client counts, crashes and reordering with the seed."""
    rng = random.Random(seed)
    return SimConfig(
        seed=seed,
        replicas=replicas,
        writers=rng.randint(1, 4),
        readers=rng.randint(0, 3),
        ops_per_client=rng.randint(1, 4),
        crashes=rng.randint(0, (replicas - 1) // 2),
        delay_bound=rng.choice([None, 0, 2, 5]),
    )


def failed(verdicts) -> list[str]:
    return [v.line() for v in verdicts if not v.passed]


def run_vmwabd(seed: int) -> list[str]:
    cfg = random_config(seed)
    h = sim_run(cfg, deployment=VmwabdDeployment(cfg.replicas))
    problems = failed(check_history(h, DEFAULT_PROPERTIES))
    if not depth_matches_ts(build_version_tree(h)):
        problems.append("version tree depth does not match timestamps")
    return problems


def run_ldr(seed: int) -> list[str]:
    f = 1 + seed % 2
    cfg = random_config(seed)
    cfg.crashes = min(cfg.crashes, f)
    return failed(check_history(sim_run(cfg, deployment=LdrDeployment(f)), DEFAULT_PROPERTIES))


def run_strongtr(seed: int) -> list[str]:
    cfg = random_config(seed)
    cfg.crashes = 0
    return failed(check_history(sim_run(cfg, deployment=StrongDeployment()), PROPERTIES))


def run_oracle(seed: int) -> list[str]:
    """Small runs where the exhaustive search must agree with the tag-order check."""
    cfg = SimConfig(seed=seed, replicas=3, writers=2, readers=2, ops_per_client=2, crashes=seed % 2)
    h = sim_run(cfg)
    fast, slow = check_atomicity(h), brute_force_linearizable(h)
    if fast.passed != slow.passed:
        return [f"oracle disagrees: atomicity {fast.passed}, brute force {slow.passed}"]
    forged = forged_history(seed)
    if check_atomicity(forged).passed != brute_force_linearizable(forged).passed:
        return [f"oracle disagrees on forged history {seed}"]
    return failed([fast])


def run_rmw(seed: int) -> list[str]:
    cfg = SimConfig(seed=seed, replicas=5, writers=2 + seed % 4, ops_per_client=2, crashes=seed % 3)
    return failed([check_rmw(sim_run(cfg, rmw_workload(cfg)))])


def run_consensus(seed: int) -> list[str]:
    procs = 2 + seed % 6
    h = sim_run(SimConfig(seed=seed, writers=procs), consensus_workload(procs), StrongDeployment())
    return failed(check_consensus(h))


def run_ranked(seed: int) -> list[str]:
    schedule = random_schedule(random.Random(seed), ops=6)
    problems = []
    for policy in Policy:
        records = run_schedule(RankedRegister(policy=policy), schedule)
        problems += failed([check_safety(records), check_non_triviality(records)])
        if policy is Policy.STRICT and lower_rank_commit(records):
            problems.append("strict register committed a lower rank after a higher one")
    return problems


CAMPAIGNS = {
    "vmwabd": run_vmwabd,
    "ldr": run_ldr,
    "strongtr": run_strongtr,
    "oracle": run_oracle,
    "rmw": run_rmw,
    "consensus": run_consensus,
    "ranked": run_ranked,
}


def main():
    parser = argparse.ArgumentParser(
        description="Run seeded simulation campaigns and check every resulting history.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s
  %(prog)s vmwabd oracle --seeds 1000
  %(prog)s rmw --first-seed 500 --json
        """
    )
    parser.add_argument(
        "campaigns",
        nargs="*",
        help=f"Campaigns to run (default: all of {', '.join(CAMPAIGNS)})"
    )
    parser.add_argument("--seeds", type=int, default=200, help="Seeds per campaign (default: 200)")
    parser.add_argument("--first-seed", type=int, default=0, help="First seed (default: 0)")
    parser.add_argument("--parallel", type=int, default=8, help="Worker threads (default: 8)")
    parser.add_argument("--json", action="store_true", help="Output results as JSON")
    args = parser.parse_args()

    names = args.campaigns or list(CAMPAIGNS)
    unknown = [name for name in names if name not in CAMPAIGNS]
    if unknown:
        parser.error(f"unknown campaigns: {', '.join(unknown)}")
    seeds = range(args.first_seed, args.first_seed + args.seeds)
    err(f"Running {len(names)} campaign(s) over {len(seeds)} seeds with {args.parallel} workers...")

    failures = {name: {} for name in names}
    with ThreadPoolExecutor(max_workers=max(1, args.parallel)) as executor:
        future_to_run = {
            executor.submit(CAMPAIGNS[name], seed): (name, seed)
            for name in names
            for seed in seeds
        }
        for future in as_completed(future_to_run):
            name, seed = future_to_run[future]
            try:
                problems = future.result()
            except Exception as e:
                problems = [f"{type(e).__name__}: {e}"]
            if problems:
                failures[name][seed] = problems

    summary = {
        name: {"seeds": len(seeds), "failed": len(failures[name]), "failures": dict(sorted(failures[name].items()))}
        for name in names
    }
    if args.json:
        print(json.dumps(summary, indent=2))
    else:
        for name, result in summary.items():
            print(f"{name}: {result['seeds'] - result['failed']}/{result['seeds']} seeds passed")
            for seed, problems in result["failures"].items():
                for problem in problems:
                    print(f"  seed {seed}: {problem}")

    sys.exit(1 if any(result["failed"] for result in summary.values()) else 0)


if __name__ == "__main__":
    main()
