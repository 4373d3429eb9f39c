"""Risk-aware navigation MDP: statistics, solving, and the policy oracle.

The headline check enumerates every stationary policy on small random maps
and evaluates each one with exact absorbing-chain linear algebra; the value
iteration in ``solve`` must land on the same optimum.
"""
from __future__ import annotations

import json
import math

import numpy as np
import pytest

from _oracles import enumerate_optimal_values, exact_policy_values, random_mdp

from ltasim.errors import (
    SolveError,
    StaleModelError,
    UnknownEdgeError,
    UnknownNodeError,
)
from ltasim.navmdp import (
    EdgeStat,
    EdgeStats,
    MdpEdge,
    NavMdp,
    build_mdp,
    policy_csv,
    solve,
    stats_json,
)


def _mdp(edges, nodes=None, c_fatal=1000.0):
    if nodes is None:
        nodes = sorted({e.source for e in edges} | {e.target for e in edges})
    return NavMdp(nodes=tuple(nodes), edges=tuple(edges), c_fatal=c_fatal)


# ---------------------------------------------------------------------------
# edge statistics


def test_edge_stat_priors_before_any_data():
    stats = EdgeStats(["e1"])
    stat = stats["e1"]
    assert stat.duration_mean is None
    assert stat.recovery_cost == 30.0
    # 0 fatal failures out of 0, smoothed by a 0.05 prior with weight 5
    assert stat.fatal_fraction == pytest.approx(0.05)


def test_edge_stat_fatal_fraction_smoothing():
    stats = EdgeStats(["e1"])
    for _ in range(4):
        stats.record_traversal("e1", 0.0, "recovered_failure", 12.0)
    stats.record_traversal("e1", 0.0, "fatal_failure", 99.0)
    stat = stats["e1"]
    # (1 + 0.05*5) / (5 + 5)
    assert stat.fatal_fraction == pytest.approx(0.125)
    assert stat.recovery_cost == pytest.approx(12.0)
    assert stat.duration_mean is None  # still no successes


def test_record_traversal_accumulates_by_outcome():
    stats = EdgeStats(["e1"])
    stats.record_traversal("e1", 10.0, "success", 8.0)
    stats.record_traversal("e1", 20.0, "success", 12.0)
    stats.record_traversal("e1", 30.0, "recovered_failure", 40.0)
    stat = stats["e1"]
    assert stat.duration_mean == pytest.approx(10.0)
    assert stat.recovery_cost == pytest.approx(40.0)
    assert stat.failure_count == 1 and stat.fatal_count == 0
    assert stat.success_model.n == 3


def test_record_traversal_rejects_bad_input():
    stats = EdgeStats(["e1"])
    with pytest.raises(ValueError):
        stats.record_traversal("e1", 0.0, "exploded", 1.0)
    with pytest.raises(ValueError):
        stats.record_traversal("e1", 0.0, "success", -1.0)
    with pytest.raises(UnknownEdgeError):
        stats.record_traversal("nope", 0.0, "success", 1.0)


def test_edge_stats_roundtrip_and_state_equal():
    rng = np.random.default_rng(3)
    stats = EdgeStats(["a", "b"])
    for _ in range(50):
        eid = "a" if rng.random() < 0.5 else "b"
        outcome = ("success", "recovered_failure", "fatal_failure")[
            int(rng.integers(0, 3))
        ]
        stats.record_traversal(eid, float(rng.uniform(0, 1e6)), outcome,
                               float(rng.uniform(0, 60)))
    clone = EdgeStats.from_dict(json.loads(stats_json(stats)))
    assert stats.state_equal(clone, tol=0.0)
    clone.record_traversal("a", 5.0, "success", 1.0)
    assert not stats.state_equal(clone)


def test_snapshot_is_rebuilt_and_isolated():
    stats = EdgeStats(["e1"])
    for t in range(20):
        stats.record_traversal("e1", t * 3600.0, "success", 5.0)
    snap = stats.snapshot()
    # snapshot models are rebuilt and usable immediately
    assert 0.0 < snap["e1"].success_model.predict(0.0).p <= 0.99
    # the live side still has pending observations
    with pytest.raises(StaleModelError):
        stats["e1"].success_model.predict(0.0)
    # mutating the original does not leak into the snapshot
    stats.record_traversal("e1", 1e6, "fatal_failure", 0.0)
    assert snap["e1"].fatal_count == 0
    assert stats["e1"].fatal_count == 1


# ---------------------------------------------------------------------------
# MDP construction


def test_mdp_edge_validation():
    good = dict(edge_id="e", source="a", target="b", d=1.0, r=1.0, kappa=0.1)
    MdpEdge(p=1.0, **good)
    with pytest.raises(ValueError):
        MdpEdge(p=0.0, **good)
    with pytest.raises(ValueError):
        MdpEdge(p=1.1, **good)
    with pytest.raises(ValueError):
        MdpEdge(edge_id="e", source="a", target="b", p=0.5, d=1.0, r=1.0,
                kappa=1.5)
    with pytest.raises(ValueError):
        MdpEdge(edge_id="e", source="a", target="b", p=0.5, d=-1.0, r=1.0,
                kappa=0.1)


def test_mdp_rejects_unknown_endpoint():
    e = MdpEdge(edge_id="e", source="a", target="ghost", p=0.5, d=1.0, r=1.0,
                kappa=0.0)
    with pytest.raises(UnknownNodeError):
        NavMdp(nodes=("a", "b"), edges=(e,), c_fatal=10.0)


def test_build_mdp_prior_fallbacks(line_map):
    stats = EdgeStats(line_map.edges.keys())
    mdp = build_mdp(line_map, stats, t=0.0)
    by_id = {e.edge_id: e for e in mdp.edges}
    e = by_id["e-dock-a"]
    assert e.p == 0.5
    assert e.d == pytest.approx(line_map.edge("e-dock-a").nominal_duration)
    assert e.r == 30.0
    assert e.kappa == pytest.approx(0.05)
    # default fatal cost: 100x the total nominal traversal time of the map
    total = sum(t_edge.nominal_duration for t_edge in line_map.edges.values())
    assert mdp.c_fatal == pytest.approx(100.0 * total)
    assert mdp.nodes == tuple(sorted(line_map.nodes))


def test_build_mdp_uses_learned_statistics(line_map):
    stats = EdgeStats(line_map.edges.keys())
    for t in range(40):
        outcome = "success" if t % 4 else "recovered_failure"
        stats.record_traversal("e-dock-a", t * 3600.0, outcome, 7.0)
    stats.rebuild()
    # failures land on hours divisible by 4; the frozen p tracks the phase
    low = build_mdp(line_map, stats, t=0.0, c_fatal=5e4)
    high = build_mdp(line_map, stats, t=3600.0, c_fatal=5e4)
    e_low = {e.edge_id: e for e in low.edges}["e-dock-a"]
    e_high = {e.edge_id: e for e in high.edges}["e-dock-a"]
    assert e_low.p == pytest.approx(0.01)
    assert e_high.p == pytest.approx(0.99)
    assert e_high.d == pytest.approx(7.0)
    assert e_high.r == pytest.approx(7.0)
    assert high.c_fatal == 5e4
    assert high.t == 3600.0


def test_build_mdp_skips_disabled_edges_but_counts_their_cost(line_map):
    closed = line_map.with_edge_enabled("e-dock-a", False)
    stats = EdgeStats(closed.edges.keys())
    mdp = build_mdp(closed, stats, t=0.0)
    assert "e-dock-a" not in {e.edge_id for e in mdp.edges}
    # the default fatal cost still covers every edge on the map
    total = sum(e.nominal_duration for e in closed.edges.values())
    assert mdp.c_fatal == pytest.approx(100.0 * total)


def test_build_mdp_requires_rebuilt_models(line_map):
    stats = EdgeStats(line_map.edges.keys())
    stats.record_traversal("e-dock-a", 0.0, "success", 5.0)
    with pytest.raises(StaleModelError):
        build_mdp(line_map, stats, t=0.0)


# ---------------------------------------------------------------------------
# solving


def test_single_edge_retry_closed_form():
    # One edge, p=0.5, 10 s travel, 5 s recovery, no fatal risk:
    # V = d + (1-p) r / p = 10 + 5 = 15 exactly.
    e = MdpEdge(edge_id="e", source="a", target="goal", p=0.5, d=10.0, r=5.0,
                kappa=0.0)
    policy = solve(_mdp([e]), "goal")
    assert policy.values["a"] == pytest.approx(15.0, abs=1e-9)
    assert policy.values["goal"] == 0.0
    assert policy.chosen == {"a": "e", "goal": None}
    assert policy.success == {"a": 1.0, "goal": 1.0}


def test_fatal_risk_success_probability():
    # With fatal mass, S = p / (p + (1-p)*kappa) for a single edge.
    e = MdpEdge(edge_id="e", source="a", target="goal", p=0.8, d=10.0, r=5.0,
                kappa=0.25)
    policy = solve(_mdp([e], c_fatal=1e4), "goal")
    assert policy.success["a"] == pytest.approx(0.8 / (0.8 + 0.2 * 0.25))
    expected_v = (0.8 * 10 + 0.2 * 0.75 * 5 + 0.2 * 0.25 * 1e4) / (0.8 + 0.05)
    assert policy.values["a"] == pytest.approx(expected_v, rel=1e-9)


def test_risky_shortcut_loses_to_safe_detour():
    # A fast but failure-prone direct edge against a slower reliable pair.
    edges = [
        MdpEdge(edge_id="direct", source="a", target="goal", p=0.1, d=10.0,
                r=60.0, kappa=0.2),
        MdpEdge(edge_id="via1", source="a", target="mid", p=0.99, d=30.0,
                r=10.0, kappa=0.0),
        MdpEdge(edge_id="via2", source="mid", target="goal", p=0.99, d=30.0,
                r=10.0, kappa=0.0),
    ]
    policy = solve(_mdp(edges, c_fatal=1e5), "goal")
    assert policy.chosen["a"] == "via1"
    assert policy.success["a"] > 0.99
    # and with the risk removed the direct edge wins
    edges[0] = MdpEdge(edge_id="direct", source="a", target="goal", p=0.95,
                       d=10.0, r=5.0, kappa=0.0)
    policy = solve(_mdp(edges, c_fatal=1e5), "goal")
    assert policy.chosen["a"] == "direct"


def test_tie_breaks_toward_smaller_edge_id():
    twin = dict(source="a", target="goal", p=0.7, d=12.0, r=9.0, kappa=0.1)
    edges = [MdpEdge(edge_id="zz", **twin), MdpEdge(edge_id="aa", **twin)]
    policy = solve(_mdp(edges), "goal")
    assert policy.chosen["a"] == "aa"


def test_unreachable_node_conventions():
    e = MdpEdge(edge_id="e", source="a", target="goal", p=0.9, d=5.0, r=5.0,
                kappa=0.0)
    mdp = _mdp([e], nodes=["a", "goal", "island"])
    policy = solve(mdp, "goal")
    assert math.isinf(policy.values["island"])
    assert policy.chosen["island"] is None
    assert policy.success["island"] == 0.0


def test_goal_sourced_edges_are_ignored():
    edges = [
        MdpEdge(edge_id="in", source="a", target="goal", p=0.9, d=5.0, r=5.0,
                kappa=0.0),
        MdpEdge(edge_id="out", source="goal", target="a", p=0.9, d=5.0,
                r=5.0, kappa=0.0),
    ]
    policy = solve(_mdp(edges), "goal")
    assert policy.chosen["goal"] is None
    assert policy.values["goal"] == 0.0
    assert policy.success["goal"] == 1.0


def test_unknown_goal_raises():
    e = MdpEdge(edge_id="e", source="a", target="b", p=0.9, d=5.0, r=5.0,
                kappa=0.0)
    with pytest.raises(UnknownNodeError):
        solve(_mdp([e]), "ghost")


def test_solve_error_when_budget_too_small():
    # A long chain of sluggish edges cannot converge in two sweeps.
    edges = [
        MdpEdge(edge_id=f"e{i}", source=f"n{i}", target=f"n{i+1}", p=0.5,
                d=10.0, r=10.0, kappa=0.0)
        for i in range(6)
    ]
    mdp = _mdp(edges)
    with pytest.raises(SolveError):
        solve(mdp, "n6", max_sweeps=2)
    policy = solve(mdp, "n6")  # default budget converges
    assert policy.residual < 1e-6
    assert 0 < policy.sweeps <= 10_000


def test_solve_matches_exhaustive_policy_enumeration():
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(60):
        mdp, goal = random_mdp(rng)
        best = enumerate_optimal_values(mdp, goal)
        policy = solve(mdp, goal)
        achieved = exact_policy_values(mdp, goal, policy.chosen)
        for node in mdp.nodes:
            if math.isinf(best[node]):
                assert math.isinf(policy.values[node])
                assert math.isinf(achieved[node])
                assert policy.chosen[node] is None or node == goal
            else:
                assert achieved[node] == pytest.approx(best[node], abs=1e-4)
                assert policy.values[node] == pytest.approx(best[node],
                                                            abs=1e-4)
                checked += 1
    assert checked > 100


def test_success_probability_matches_monte_carlo():
    rng = np.random.default_rng(9)
    edges = [
        MdpEdge(edge_id="e1", source="a", target="b", p=0.8, d=10.0, r=4.0,
                kappa=0.1),
        MdpEdge(edge_id="e2", source="b", target="goal", p=0.6, d=8.0, r=6.0,
                kappa=0.05),
    ]
    policy = solve(_mdp(edges, c_fatal=1e4), "goal")
    by_src = {e.source: e for e in edges}
    wins = 0
    trials = 40_000
    for _ in range(trials):
        node = "a"
        while node != "goal":
            e = by_src[node]
            u = rng.random()
            if u < e.p:
                node = e.target
            elif u < e.p + (1 - e.p) * e.kappa:
                break  # fatal
        else:
            wins += 1
    assert policy.success["a"] == pytest.approx(wins / trials, abs=0.01)


# ---------------------------------------------------------------------------
# reporting


def test_policy_csv_layout():
    e = MdpEdge(edge_id="e", source="a", target="goal", p=0.5, d=10.0, r=5.0,
                kappa=0.0)
    mdp = _mdp([e], nodes=["a", "goal", "island"])
    text = policy_csv(solve(mdp, "goal"))
    lines = text.strip().split("\n")
    assert lines[0] == "node,chosen_edge,V_seconds,S"
    rows = {ln.split(",")[0]: ln.split(",") for ln in lines[1:]}
    assert set(rows) == {"a", "goal", "island"}
    assert rows["a"][1] == "e" and float(rows["a"][2]) == pytest.approx(15.0)
    assert rows["island"][1] == "" and rows["island"][2] == "inf"
    assert float(rows["island"][3]) == 0.0


def test_stats_json_keyed_by_edge():
    stats = EdgeStats(["e2", "e1"])
    stats.record_traversal("e1", 3.0, "success", 4.0)
    doc = json.loads(stats_json(stats))
    assert set(doc["edges"]) == {"e1", "e2"}
    assert doc["edges"]["e1"]["duration_count"] == 1
    assert doc["schema_version"] == 1
