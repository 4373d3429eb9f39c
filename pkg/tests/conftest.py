"""Shared fixtures: small hand-built maps and scenario plumbing."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

from ltasim.topomap import MetricPose, TopoEdge, TopoMap, TopoNode


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance verdict lines after the run, if any were taken."""
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "VERDICTS", None) if module else None
    if lines:
        terminalreporter.write_sep("-", "acceptance verdicts")
        for line in lines:
            terminalreporter.write_line(line)


def make_node(nid, x=0.0, y=0.0, tags=("plain",), radius=1.0):
    return TopoNode(id=nid, label=nid, pose=MetricPose(x, y),
                    influence_radius=radius, tags=frozenset(tags))


def make_edge(eid, src, tgt, length=10.0, speed=1.0, action="move_base",
              enabled=True):
    return TopoEdge(id=eid, source=src, target=tgt, action=action,
                    nominal_length=length, nominal_speed=speed, enabled=enabled)


@pytest.fixture
def line_map():
    """dock -- a -- b, bidirectional, 10 m edges at 1 m/s."""
    nodes = [
        make_node("dock", 0, 0, tags=("dock",)),
        make_node("a", 10, 0),
        make_node("b", 20, 0),
    ]
    edges = [
        make_edge("e-dock-a", "dock", "a", action="undock"),
        make_edge("e-a-dock", "a", "dock", action="dock"),
        make_edge("e-a-b", "a", "b"),
        make_edge("e-b-a", "b", "a"),
    ]
    m = TopoMap(nodes, edges)
    m.validate()
    return m


@pytest.fixture
def diamond_map():
    """dock->a, then a->goal direct (20 m) or a->via->goal detour (2 x 13 m)."""
    nodes = [
        make_node("dock", 0, 0, tags=("dock",)),
        make_node("a", 5, 0),
        make_node("via", 15, 8),
        make_node("goal", 25, 0),
    ]
    edges = [
        make_edge("e-dock-a", "dock", "a", length=5, speed=0.5, action="undock"),
        make_edge("e-a-dock", "a", "dock", length=5, speed=0.5, action="dock"),
        make_edge("e-a-goal", "a", "goal", length=20),
        make_edge("e-goal-a", "goal", "a", length=20),
        make_edge("e-a-via", "a", "via", length=13),
        make_edge("e-via-a", "via", "a", length=13),
        make_edge("e-via-goal", "via", "goal", length=13),
        make_edge("e-goal-via", "goal", "via", length=13),
    ]
    m = TopoMap(nodes, edges)
    m.validate()
    return m


SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture(scope="session")
def scenario_dir():
    return SCENARIO_DIR


def write_scenario(tmp_path: Path, doc: dict, name="scenario.json") -> Path:
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return path
