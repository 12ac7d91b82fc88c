from collections import Counter

import pytest

from covreg.checker import (
    ATOMICITY,
    BARRIER,
    CONSOLIDATION,
    CONTINUITY,
    DEFAULT_PROPERTIES,
    EVOLUTION,
    ORACLE,
    PROPERTIES,
    STRONG,
    VALIDITY,
    Verdict,
    brute_force_linearizable,
    build_version_tree,
    check_atomicity,
    check_barrier,
    check_consolidation,
    check_continuity,
    check_evolution,
    check_history,
    check_strong_coverability,
    check_validity,
    complete_history,
    depth_matches_ts,
    minimize,
    render_tree,
)
from covreg.core import TAG0, Flag, Tag
from covreg.errors import DisconnectedTreeError, SizeLimitError
from covreg.history import History
from covreg.simnet import SimConfig, sim_run
from covreg.workload import forged_history


def failures(h):
    return {v.property: v.reason for v in check_history(h, PROPERTIES) if not v.passed}


@pytest.mark.parametrize(
    "name, expected",
    [
        ("good.log", {}),
        ("incomplete_write.log", {}),
        ("initial_value.log", {}),
        ("branch.log", {STRONG: "branch"}),
        ("duplicate_tag.log", {
            ATOMICITY: "duplicate-tag", VALIDITY: "duplicate-tag", CONSOLIDATION: "stale-version",
            STRONG: "duplicate-tag", BARRIER: "off-branch",
        }),
        ("orphan.log", {VALIDITY: "unreachable", CONTINUITY: "no-producer"}),
        ("stale_version.log", {CONSOLIDATION: "stale-version", STRONG: "branch", BARRIER: "off-branch"}),
        ("level_order.log", {ATOMICITY: "bad-write", EVOLUTION: "level-order", STRONG: "branch"}),
        ("new_old_inversion.log", {ATOMICITY: "real-time"}),
        ("read_before_write.log", {ATOMICITY: "real-time"}),
        ("unknown_tag.log", {ATOMICITY: "unknown-tag"}),
        ("wrong_value.log", {ATOMICITY: "wrong-value"}),
    ],
)
def test_forged_histories(load_history, name, expected):
    """Each forged history fails exactly the properties it was built to break"""
    assert failures(load_history(name)) == expected


def test_default_properties_in_fixed_order(load_history):
    verdicts = check_history(load_history("good.log"))
    assert [v.property for v in verdicts] == list(DEFAULT_PROPERTIES)
    assert all(v.passed for v in verdicts)


def test_counterexample_is_shrunk(load_history):
    """A failure reports the operations that still fail for the same reason on their own"""
    h = load_history("wrong_value.log")
    v = check_atomicity(h)
    assert v.op_ids == (1, 2)
    assert [e.op_id for e in v.counterexample] == [1, 1, 2, 2]

    padded = History.parse(h.emit() + "5 invoke 3 cvr-read 3 [] -\n6 respond 3 cvr-read 3 [] [\"61\",[1,1]]\n")
    assert check_atomicity(padded).op_ids == (1, 2)


def test_new_old_inversion_needs_the_write(load_history):
    """Dropping the write turns the failure into a different one, so it stays in the counterexample"""
    v = check_atomicity(load_history("new_old_inversion.log"))
    assert v.reason == "real-time"
    assert v.op_ids == (1, 2, 3)
    assert v.message == "#2 precedes #3 but (0,0) orders before (1,1)"


def test_minimize_keeps_passing_history(load_history):
    h = load_history("good.log")
    assert minimize(h, check_atomicity) is h


def test_verdict_report():
    v = Verdict(ATOMICITY, False, "bad", "wrong-value")
    assert v.line() == "atomicity: FAIL (wrong-value) bad"
    assert v.report() == ["atomicity: FAIL (wrong-value) bad"]
    assert Verdict(VALIDITY, True).line() == "validity: PASS"


def test_incomplete_write_completion(load_history):
    """An unfinished write whose successor tag was read is completed as a chg write"""
    (w, r) = complete_history(load_history("incomplete_write.log").register_ops())
    assert (w.value, w.tag, w.flag) == (b"a", Tag(1, 1), Flag.CHG)
    assert r.op.complete


def test_unobserved_incomplete_write_dropped(load_history):
    h = load_history("incomplete_write.log").without([2])
    assert complete_history(h.register_ops()) == []
    assert check_atomicity(h).passed


@pytest.mark.parametrize(
    "name", ["good.log", "incomplete_write.log", "branch.log", "new_old_inversion.log",
             "read_before_write.log", "unknown_tag.log", "wrong_value.log", "duplicate_tag.log"],
)
def test_brute_force_agrees(load_history, name):
    """The exhaustive search and the tag-order check reach the same verdict"""
    h = load_history(name)
    assert brute_force_linearizable(h).passed == check_atomicity(h).passed


def test_oracle_verdict(load_history):
    verdicts = check_history(load_history("new_old_inversion.log"), [ATOMICITY], oracle=True)
    assert [(v.property, v.passed) for v in verdicts] == [(ATOMICITY, False), (ORACLE, True)]


def test_brute_force_size_limit():
    h = sim_run(SimConfig(seed=1, replicas=3, writers=3, ops_per_client=3))
    with pytest.raises(SizeLimitError, match="9 operations exceed the brute-force limit of 8"):
        brute_force_linearizable(h)
    assert ORACLE not in [v.property for v in check_history(h, oracle=True)]


@pytest.mark.parametrize("seed", range(12))
def test_brute_force_agrees_on_small_runs(seed):
    h = sim_run(SimConfig(seed=seed, replicas=3, writers=2, readers=2, ops_per_client=2, crashes=seed % 2))
    assert brute_force_linearizable(h).passed
    assert check_atomicity(h).passed


def test_version_tree(load_history):
    tree = build_version_tree(load_history("good.log"))
    assert tree.nodes == [TAG0, Tag(1, 1), Tag(2, 1)]
    assert tree.edges == [(TAG0, Tag(1, 1)), (Tag(1, 1), Tag(2, 1))]
    assert tree.is_path
    assert depth_matches_ts(tree)
    assert tree.is_ancestor(Tag(1, 1), Tag(2, 1))
    assert not tree.is_ancestor(Tag(2, 1), Tag(1, 1))


def test_branching_tree(load_history):
    tree = build_version_tree(load_history("branch.log"))
    assert tree.children(TAG0) == [Tag(1, 1), Tag(1, 2)]
    assert not tree.is_path
    assert tree.levels() == {0: [TAG0], 1: [Tag(1, 1), Tag(1, 2)]}
    assert render_tree(tree) == (
        "(0,0) depth 0 initial\n"
        "├── (1,1) depth 1 by p1\n"
        "└── (1,2) depth 1 by p2\n"
    )


def test_disconnected_tree(load_history):
    with pytest.raises(DisconnectedTreeError, match=r"unreachable from the initial version: \(4,1\)"):
        build_version_tree(load_history("orphan.log"))
    with pytest.raises(DisconnectedTreeError, match="two producers"):
        build_version_tree(load_history("duplicate_tag.log"))


def test_depth_differs_from_ts(load_history):
    tree = build_version_tree(load_history("level_order.log"))
    assert not depth_matches_ts(tree)


def test_individual_checks_name_their_property(load_history):
    h = load_history("good.log")
    checks = [check_atomicity, check_validity, check_consolidation, check_continuity,
              check_evolution, check_strong_coverability, check_barrier]
    assert [c(h).property for c in checks] == list(PROPERTIES)


def agreement(seeds):
    outcomes = Counter()
    for seed in seeds:
        h = forged_history(seed)
        fast, slow = check_atomicity(h), brute_force_linearizable(h)
        assert fast.passed == slow.passed, f"seed {seed}:\n{h.emit()}"
        outcomes[fast.passed] += 1
    return outcomes


def test_forged_histories_agree_with_exhaustive_search():
    """Tag-order atomicity and the exhaustive search give the same answer on atomic and broken histories"""
    outcomes = agreement(range(1500))
    assert outcomes[True] > 100
    assert outcomes[False] > 100


@pytest.mark.slow
def test_forged_histories_agree_at_scale():
    outcomes = agreement(range(10_000))
    assert outcomes[True] and outcomes[False]
