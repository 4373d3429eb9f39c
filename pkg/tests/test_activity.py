"""Trajectory filtering, qualitative encoding, clustering, novelty."""
from __future__ import annotations

import math

import numpy as np
import pytest

from ltasim.activity import (
    SemanticRegion,
    Trajectory,
    classify_feature,
    classify_partial,
    cluster_nightly,
    clusters_from_dict,
    clusters_to_dict,
    encode,
    episodes,
    evaluate_weekly,
    feature_dimension,
    passes_filter,
    regions_from_dict,
    regions_to_dict,
    weekly_eval_csv,
)
from ltasim.errors import DegenerateTrajectoryError

SQUARE = ((-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0))
PRINTER = SemanticRegion(name="printer", kind="landmark", vertices=SQUARE)


def traj(points, traj_id="t"):
    return Trajectory(traj_id, tuple((float(i), float(x), float(y))
                                     for i, (x, y) in enumerate(points)))


def line_traj(x0, x1, n=13, y=0.0, noise=0.0, rng=None, traj_id="t"):
    xs = np.linspace(x0, x1, n)
    ys = np.full(n, y)
    if noise and rng is not None:
        xs = xs + rng.normal(0.0, noise, n)
        ys = ys + rng.normal(0.0, noise, n)
    return Trajectory(traj_id, tuple(
        (float(i), float(px), float(py)) for i, (px, py) in enumerate(zip(xs, ys))
    ))


# ---------------------------------------------------------------------------
# trajectories and regions


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory("t", ((0.0, 0.0, 0.0),))
    with pytest.raises(ValueError):
        Trajectory("t", ((0.0, 0.0, 0.0), (0.0, 1.0, 0.0)))


def test_path_length_and_displacement():
    out_and_back = traj([(0, 0), (3, 4), (0, 0)])
    assert out_and_back.path_length() == pytest.approx(10.0)
    assert out_and_back.displacement_ratio() == pytest.approx(0.0)
    straight = traj([(0, 0), (3, 4)])
    assert straight.displacement_ratio() == pytest.approx(1.0)
    dogleg = traj([(0, 0), (3, 0), (3, 4)])
    assert dogleg.displacement_ratio() == pytest.approx(5.0 / 7.0)


def test_displacement_filter_threshold():
    assert passes_filter(traj([(0, 0), (10, 0)]))
    assert not passes_filter(traj([(0, 0), (5, 0), (0.1, 0.0)]))


def test_prefix_takes_leading_fraction():
    t = traj([(i, 0) for i in range(10)])
    p = t.prefix(0.2)
    assert len(p.poses) == 2
    assert p.poses == t.poses[:2]
    assert len(t.prefix(0.31).poses) == 4  # ceil(3.1)
    assert len(traj([(0, 0), (1, 0)]).prefix(0.01).poses) == 2  # floor of 2


def test_region_validation():
    with pytest.raises(ValueError):
        SemanticRegion(name="r", kind="hallway", vertices=SQUARE)
    with pytest.raises(ValueError):
        SemanticRegion(name="r", kind="room", vertices=((0, 0), (1, 0)))
    bowtie = ((0, 0), (2, 2), (2, 0), (0, 2))
    with pytest.raises(ValueError, match="self-intersects"):
        SemanticRegion(name="r", kind="landmark", vertices=bowtie)


def test_region_anchor_is_vertex_mean():
    r = SemanticRegion(name="r", kind="landmark",
                       vertices=((0, 0), (4, 0), (4, 2), (0, 2)))
    assert r.anchor == (2.0, 1.0)


def test_feature_dimension_counts_landmarks_only():
    room = SemanticRegion(name="z-room", kind="room", vertices=SQUARE)
    other = SemanticRegion(name="cooler", kind="landmark",
                           vertices=tuple((x + 10, y) for x, y in SQUARE))
    assert feature_dimension([PRINTER, room, other]) == 84


# ---------------------------------------------------------------------------
# episodes and encoding


def test_episode_labels_hand_case():
    # toward the anchor, hold nearby, then leave
    t = Trajectory("t", (
        (0.0, 10.0, 0.0),
        (1.0, 5.0, 0.0),    # far, approaching fast
        (2.0, 1.0, 0.0),    # crosses into near while approaching
        (3.0, 1.0, 0.04),   # radial rate ~0.001: static, near
        (4.0, 6.0, 0.0),    # receding, starts near
        (5.0, 12.0, 0.0),   # receding, far
    ))
    assert episodes(t, anchor=(0.0, 0.0)) == [
        ("far", "approaching"),
        ("near", "static"),
        ("near", "receding"),
        ("far", "receding"),
    ]


def test_episode_runs_merge_consecutive_labels():
    t = traj([(10, 0), (8, 0), (6, 0), (4, 0)])
    assert episodes(t, anchor=(0.0, 0.0)) == [("far", "approaching")]


def test_encode_hand_vector():
    t = Trajectory("t", (
        (0.0, 10.0, 0.0),
        (1.0, 5.0, 0.0),
        (2.0, 1.0, 0.0),
        (3.0, 1.0, 0.04),
        (4.0, 6.0, 0.0),
        (5.0, 12.0, 0.0),
    ))
    vec = encode(t, [PRINTER])
    assert vec.shape == (42,)
    assert np.linalg.norm(vec) == pytest.approx(1.0)
    # code order: near/approaching, near/receding, near/static,
    #             far/approaching, far/receding, far/static
    expect = np.zeros(42)
    for idx in (
        3,              # far/approaching
        2,              # near/static
        1,              # near/receding
        4,              # far/receding
        6 + 3 * 6 + 2,  # far/approaching -> near/static
        6 + 2 * 6 + 1,  # near/static -> near/receding
        6 + 1 * 6 + 4,  # near/receding -> far/receding
    ):
        expect[idx] = 1.0
    np.testing.assert_allclose(vec, expect / math.sqrt(7.0), atol=1e-12)


def test_encode_blocks_follow_landmark_name_order():
    far_lm = SemanticRegion(name="aaa", kind="landmark",
                            vertices=tuple((x + 100, y + 100) for x, y in SQUARE))
    t = traj([(10, 0), (5, 0), (1, 0)])
    vec = encode(t, [PRINTER, far_lm])
    assert vec.shape == (84,)
    # block 0 belongs to "aaa" (sorted first): walking toward the printer
    # recedes from it
    assert vec[4] > 0.0  # far/receding
    # block 1 belongs to "printer": one far/approaching episode
    assert vec[42 + 3] > 0.0
    assert np.count_nonzero(vec) == 2


def test_encode_requires_a_landmark():
    room = SemanticRegion(name="room", kind="room", vertices=SQUARE)
    with pytest.raises(ValueError):
        encode(traj([(0, 0), (1, 0)]), [room])


def test_encode_rejects_fully_static_trajectory():
    t = Trajectory("t", ((0.0, 50.0, 50.0), (1.0, 50.0, 50.01)))
    with pytest.raises(DegenerateTrajectoryError):
        encode(t, [PRINTER])


# ---------------------------------------------------------------------------
# clustering


def corpus(rng, n_per=8):
    """Two archetypes around the printer: leaving versus arriving."""
    feats, labels = [], []
    for i in range(n_per):
        leave = line_traj(0.5, 12.0, noise=0.05, rng=rng, traj_id=f"l{i}")
        arrive = line_traj(12.0, 0.5, noise=0.05, rng=rng, traj_id=f"a{i}")
        feats.append(encode(leave, [PRINTER]))
        labels.append("leave")
        feats.append(encode(arrive, [PRINTER]))
        labels.append("arrive")
    return feats, labels


def test_cluster_recovers_archetypes():
    rng = np.random.default_rng(4)
    feats, labels = corpus(rng)
    clusters = cluster_nightly(feats, k_range=(2, 5), seed=7, restarts=10)
    assert clusters.k == 2
    assert clusters.n_features == 16
    by_label = {
        lbl: {clusters.assignments[i] for i, l in enumerate(labels) if l == lbl}
        for lbl in ("leave", "arrive")
    }
    assert len(by_label["leave"]) == 1 and len(by_label["arrive"]) == 1
    assert by_label["leave"] != by_label["arrive"]
    assert clusters.tau > 0.0
    assert set(clusters.silhouette_by_k) == {2, 3, 4, 5}


def test_cluster_determinism():
    rng = np.random.default_rng(4)
    feats, _ = corpus(rng)
    a = cluster_nightly(feats, k_range=(2, 4), seed=3, restarts=5)
    b = cluster_nightly(feats, k_range=(2, 4), seed=3, restarts=5)
    assert a.assignments == b.assignments
    np.testing.assert_array_equal(a.centroids, b.centroids)
    assert a.tau == b.tau


def test_cluster_requires_enough_features():
    with pytest.raises(ValueError):
        cluster_nightly([np.ones(4)] * 3, k_range=(2, 4))
    with pytest.raises(ValueError):
        cluster_nightly([np.ones(4)] * 8, k_range=(0, 4))


def test_identical_corpus_degenerates():
    feats = [np.ones(6) / math.sqrt(6.0)] * 10
    clusters = cluster_nightly(feats, k_range=(2, 5), seed=1)
    assert clusters.k == 2
    assert clusters.tau == 1e-6
    assert set(clusters.assignments) == {0}
    assert clusters.silhouette_by_k == {}


def test_novelty_radius():
    rng = np.random.default_rng(4)
    feats, _ = corpus(rng)
    clusters = cluster_nightly(feats, k_range=(2, 3), seed=7, restarts=5,
                               tau_percentile=100.0)
    for f in feats:
        assert not classify_feature(clusters, f).novel
    odd = np.zeros_like(feats[0])
    odd[5] = 1.0  # far/static only: unlike either archetype
    result = classify_feature(clusters, odd)
    assert result.novel
    assert result.distance > clusters.tau


def test_classify_partial_uses_prefix():
    rng = np.random.default_rng(4)
    feats, labels = corpus(rng)
    clusters = cluster_nightly(feats, k_range=(2, 3), seed=7, restarts=5)
    t = line_traj(0.5, 12.0, noise=0.05, rng=np.random.default_rng(9))
    via_partial = classify_partial(clusters, t, [PRINTER],
                                   prefix_fraction=0.4)
    direct = classify_feature(clusters, encode(t.prefix(0.4), [PRINTER]))
    assert via_partial == direct


# ---------------------------------------------------------------------------
# weekly evaluation


def test_weekly_evaluation_learning_curve():
    rng = np.random.default_rng(12)

    def batch(n):
        out = []
        for i in range(n):
            out.append((line_traj(0.5, 12.0, noise=0.05, rng=rng), "leave"))
            out.append((line_traj(12.0, 0.5, noise=0.05, rng=rng), "arrive"))
        return out

    rows = evaluate_weekly(
        [batch(4), batch(4)], batch(3), [PRINTER],
        k_range=(2, 3), seed=5, restarts=5, prefix_fraction=0.5,
    )
    assert [r.weeks for r in rows] == ["1", "1-2"]
    assert [r.count for r in rows] == [8, 16]
    for row in rows:
        assert row.k == 2
        assert 0.0 <= row.f1 <= 1.0
    # the archetypes separate cleanly from half-length prefixes
    assert rows[-1].f1 == pytest.approx(1.0)
    csv = weekly_eval_csv(rows)
    lines = csv.strip().split("\n")
    assert lines[0] == "weeks,count,K,recall,precision,F1"
    assert len(lines) == 3


# ---------------------------------------------------------------------------
# serialization


def test_regions_roundtrip(tmp_path):
    room = SemanticRegion(name="room", kind="room", vertices=SQUARE)
    doc = regions_to_dict([room, PRINTER])
    assert [r["name"] for r in doc["regions"]] == ["printer", "room"]
    back = regions_from_dict(doc)
    assert back == [PRINTER, room]


def test_clusters_roundtrip():
    rng = np.random.default_rng(4)
    feats, _ = corpus(rng)
    clusters = cluster_nightly(feats, k_range=(2, 3), seed=7, restarts=5)
    back = clusters_from_dict(clusters_to_dict(clusters))
    assert back.k == clusters.k
    assert back.assignments == clusters.assignments
    assert back.tau == pytest.approx(clusters.tau)
    np.testing.assert_allclose(back.centroids, clusters.centroids)
    assert back.silhouette_by_k == pytest.approx(clusters.silhouette_by_k)
