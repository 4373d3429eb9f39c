"""Trajectory-based activity learning.

Observed person trajectories are filtered by displacement ratio (loops and
jitter are discarded), then encoded as qualitative histograms relative to a
set of landmark regions: per landmark, runs of constant (near/far,
approaching/receding/static) labels form episodes, and the feature vector
counts episode codes and episode-transition bigrams, L2-normalised. Nightly
k-means over the encoded corpus (seeded, multi-restart, silhouette-selected
K) yields clusters plus a novelty radius tau; during the day a trajectory
prefix is classified to its nearest centroid and flagged novel beyond tau.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ltasim.errors import DegenerateTrajectoryError

DISPLACEMENT_THETA = 0.5
NEAR_M = 2.0
RADIAL_SPEED_MPS = 0.05
PREFIX_FRACTION = 0.2
TAU_PERCENTILE = 95.0
TAU_FLOOR = 1e-6
KMEANS_RESTARTS = 50
K_RANGE = (2, 20)

_DIST_LABELS = ("near", "far")
_MOTION_LABELS = ("approaching", "receding", "static")
_CODES = [(d, m) for d in _DIST_LABELS for m in _MOTION_LABELS]
_CODE_INDEX = {c: i for i, c in enumerate(_CODES)}
_N_CODES = len(_CODES)                      # 6 unigram codes per landmark
_BLOCK = _N_CODES + _N_CODES * _N_CODES     # + 36 bigram codes per landmark


@dataclass(frozen=True)
class Trajectory:
    traj_id: str
    poses: tuple  # ((t, x, y), ...)

    def __post_init__(self):
        poses = tuple(tuple(map(float, p)) for p in self.poses)
        if len(poses) < 2:
            raise ValueError(f"trajectory {self.traj_id!r}: needs >= 2 poses")
        for a, b in zip(poses, poses[1:]):
            if b[0] <= a[0]:
                raise ValueError(
                    f"trajectory {self.traj_id!r}: pose times must increase"
                )
        object.__setattr__(self, "poses", poses)

    def path_length(self) -> float:
        return sum(
            math.hypot(b[1] - a[1], b[2] - a[2])
            for a, b in zip(self.poses, self.poses[1:])
        )

    def displacement_ratio(self) -> float:
        """Net displacement over path length; 0 for a perfect loop, 1 for a
        straight line. Degenerate zero-length paths score 0."""
        length = self.path_length()
        if length <= 0.0:
            return 0.0
        first, last = self.poses[0], self.poses[-1]
        return math.hypot(last[1] - first[1], last[2] - first[2]) / length

    def prefix(self, fraction: float = PREFIX_FRACTION) -> "Trajectory":
        n = max(2, math.ceil(len(self.poses) * fraction))
        return Trajectory(self.traj_id, self.poses[:n])


@dataclass(frozen=True)
class SemanticRegion:
    """Named polygon; ``kind`` is "landmark" (used for encoding) or "room"."""

    name: str
    kind: str
    vertices: tuple

    def __post_init__(self):
        if self.kind not in ("landmark", "room"):
            raise ValueError(f"region {self.name!r}: unknown kind {self.kind!r}")
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise ValueError(f"region {self.name!r}: needs >= 3 vertices")
        if _self_intersects(verts):
            raise ValueError(f"region {self.name!r}: polygon self-intersects")
        object.__setattr__(self, "vertices", verts)

    @property
    def anchor(self) -> tuple[float, float]:
        """Reference point for qualitative distance (vertex mean)."""
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        return (sum(xs) / len(xs), sum(ys) / len(ys))


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(v) < 1e-12:
            return 0
        return 1 if v > 0 else -1

    def on_seg(a, b, c):
        return (
            min(a[0], b[0]) - 1e-12 <= c[0] <= max(a[0], b[0]) + 1e-12
            and min(a[1], b[1]) - 1e-12 <= c[1] <= max(a[1], b[1]) + 1e-12
        )

    o1, o2 = orient(p1, p2, p3), orient(p1, p2, p4)
    o3, o4 = orient(p3, p4, p1), orient(p3, p4, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_seg(p1, p2, p3):
        return True
    if o2 == 0 and on_seg(p1, p2, p4):
        return True
    if o3 == 0 and on_seg(p3, p4, p1):
        return True
    if o4 == 0 and on_seg(p3, p4, p2):
        return True
    return False


def _self_intersects(verts) -> bool:
    n = len(verts)
    if n == 3:
        return False
    edges = [(verts[i], verts[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == (i + 1) % n or i == (j + 1) % n:
                continue
            if _segments_cross(*edges[i], *edges[j]):
                return True
    return False


def landmarks_of(regions) -> list[SemanticRegion]:
    return sorted(
        (r for r in regions if r.kind == "landmark"), key=lambda r: r.name
    )


def feature_dimension(regions) -> int:
    return len(landmarks_of(regions)) * _BLOCK


def episodes(traj: Trajectory, anchor, near_m: float = NEAR_M,
             radial_speed: float = RADIAL_SPEED_MPS) -> list[tuple[str, str]]:
    """Maximal runs of constant (distance, motion) labels along the path.

    Each pose-to-pose segment is labelled by the distance band of its start
    pose and by the radial speed toward the anchor over the segment."""
    ax, ay = anchor
    dists = [math.hypot(x - ax, y - ay) for _, x, y in traj.poses]
    labels: list[tuple[str, str]] = []
    for i in range(len(traj.poses) - 1):
        dt = traj.poses[i + 1][0] - traj.poses[i][0]
        rate = (dists[i + 1] - dists[i]) / dt
        dist_label = "near" if dists[i] <= near_m else "far"
        if rate < -radial_speed:
            motion = "approaching"
        elif rate > radial_speed:
            motion = "receding"
        else:
            motion = "static"
        label = (dist_label, motion)
        if not labels or labels[-1] != label:
            labels.append(label)
    return labels


def encode(traj: Trajectory, regions, near_m: float = NEAR_M,
           radial_speed: float = RADIAL_SPEED_MPS) -> np.ndarray:
    """Encode a trajectory as an L2-normalised qualitative histogram.

    The vector has one block per landmark (sorted by name): 6 episode-code
    counts followed by 36 episode-bigram counts. Raises
    DegenerateTrajectoryError when every landmark sees a single static
    episode (no usable structure)."""
    lms = landmarks_of(regions)
    if not lms:
        raise ValueError("encoding requires at least one landmark region")
    vec = np.zeros(len(lms) * _BLOCK)
    degenerate = True
    for li, lm in enumerate(lms):
        eps = episodes(traj, lm.anchor, near_m=near_m, radial_speed=radial_speed)
        if len(eps) > 1 or any(motion != "static" for _, motion in eps):
            degenerate = False
        base = li * _BLOCK
        for code in eps:
            vec[base + _CODE_INDEX[code]] += 1.0
        for a, b in zip(eps, eps[1:]):
            idx = _N_CODES + _CODE_INDEX[a] * _N_CODES + _CODE_INDEX[b]
            vec[base + idx] += 1.0
    if degenerate:
        raise DegenerateTrajectoryError(
            f"trajectory {traj.traj_id!r}: single static episode at every landmark"
        )
    norm = float(np.linalg.norm(vec))
    return vec / norm


def passes_filter(traj: Trajectory, theta: float = DISPLACEMENT_THETA) -> bool:
    return traj.displacement_ratio() >= theta


@dataclass(frozen=True)
class ActivityClusters:
    k: int
    centroids: np.ndarray
    assignments: tuple[int, ...]
    tau: float
    seed: int
    n_features: int
    silhouette_by_k: dict


@dataclass(frozen=True)
class Classified:
    cluster: int
    distance: float
    novel: bool


def cluster_nightly(features, k_range=K_RANGE, seed: int = 0,
                    restarts: int = KMEANS_RESTARTS,
                    tau_percentile: float = TAU_PERCENTILE) -> ActivityClusters:
    """Cluster encoded trajectories with seeded multi-restart k-means.

    K is selected by maximum mean silhouette over ``k_range`` (clamped to the
    feasible range for the corpus size); the novelty radius tau is the
    ``tau_percentile`` percentile of training distances to own centroids,
    floored at 1e-6. An all-identical corpus degenerates to K = k_min with
    the floor tau.
    """
    x = np.asarray(list(features), dtype=np.float64)
    k_min, k_max = int(k_range[0]), int(k_range[1])
    if k_min < 1 or k_max < k_min:
        raise ValueError(f"invalid k_range {k_range!r}")
    n = x.shape[0]
    if n < 2 * k_min:
        raise ValueError(
            f"need at least {2 * k_min} features to cluster, got {n}"
        )

    if np.allclose(x, x[0], atol=1e-12):
        centroids = np.tile(x[0], (k_min, 1))
        return ActivityClusters(
            k=k_min,
            centroids=centroids,
            assignments=tuple([0] * n),
            tau=TAU_FLOOR,
            seed=seed,
            n_features=n,
            silhouette_by_k={},
        )

    import warnings

    from sklearn.cluster import KMeans
    from sklearn.exceptions import ConvergenceWarning
    from sklearn.metrics import silhouette_score

    def fit(k):
        km = KMeans(n_clusters=k, n_init=restarts, random_state=seed)
        with warnings.catch_warnings():
            # duplicate feature vectors can collapse clusters below k; the
            # len(set(labels)) check below handles that case explicitly
            warnings.simplefilter("ignore", ConvergenceWarning)
            labels = km.fit_predict(x)
        return km, labels

    hi = min(k_max, n - 1)
    lo = min(k_min, hi)
    best = None
    sil_by_k: dict[int, float] = {}
    for k in range(lo, hi + 1):
        km, labels = fit(k)
        if len(set(labels.tolist())) < 2:
            continue
        score = float(silhouette_score(x, labels))
        sil_by_k[k] = score
        if best is None or score > best[0]:
            best = (score, k, km)
    if best is None:
        km, _ = fit(lo)
        best = (float("nan"), lo, km)

    _, k, km = best
    labels = km.labels_
    dists = np.linalg.norm(x - km.cluster_centers_[labels], axis=1)
    tau = max(TAU_FLOOR, float(np.percentile(dists, tau_percentile)))
    return ActivityClusters(
        k=k,
        centroids=km.cluster_centers_.copy(),
        assignments=tuple(int(v) for v in labels),
        tau=tau,
        seed=seed,
        n_features=n,
        silhouette_by_k=sil_by_k,
    )


def classify_feature(clusters: ActivityClusters, feature: np.ndarray) -> Classified:
    dists = np.linalg.norm(clusters.centroids - feature, axis=1)
    cluster = int(np.argmin(dists))
    distance = float(dists[cluster])
    return Classified(
        cluster=cluster, distance=distance, novel=distance > clusters.tau
    )


def classify_partial(clusters: ActivityClusters, traj: Trajectory, regions,
                     prefix_fraction: float = PREFIX_FRACTION,
                     near_m: float = NEAR_M,
                     radial_speed: float = RADIAL_SPEED_MPS) -> Classified:
    """Classify a trajectory from its leading ``prefix_fraction`` of poses."""
    feature = encode(
        traj.prefix(prefix_fraction), regions,
        near_m=near_m, radial_speed=radial_speed,
    )
    return classify_feature(clusters, feature)


# -- evaluation over labelled corpora ----------------------------------------

def _cluster_label_map(clusters: ActivityClusters, labels) -> dict[int, str]:
    """Map each cluster to the majority ground-truth label of its members."""
    votes: dict[int, dict[str, int]] = {}
    for ci, label in zip(clusters.assignments, labels):
        votes.setdefault(ci, {}).setdefault(label, 0)
        votes[ci][label] += 1
    return {
        ci: max(sorted(counts), key=lambda lbl: counts[lbl])
        for ci, counts in votes.items()
    }


def _macro_prf(true_labels, predicted_labels) -> tuple[float, float, float]:
    classes = sorted(set(true_labels))
    precisions, recalls = [], []
    for c in classes:
        tp = sum(1 for t, p in zip(true_labels, predicted_labels) if t == c and p == c)
        pred_c = sum(1 for p in predicted_labels if p == c)
        true_c = sum(1 for t in true_labels if t == c)
        precisions.append(tp / pred_c if pred_c else 0.0)
        recalls.append(tp / true_c if true_c else 0.0)
    precision = sum(precisions) / len(precisions)
    recall = sum(recalls) / len(recalls)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return recall, precision, f1


@dataclass(frozen=True)
class WeeklyEvalRow:
    weeks: str
    count: int
    k: int
    recall: float
    precision: float
    f1: float


def evaluate_weekly(train_by_week, test_set, regions,
                    k_range=K_RANGE, seed: int = 0,
                    restarts: int = KMEANS_RESTARTS,
                    prefix_fraction: float = PREFIX_FRACTION,
                    near_m: float = NEAR_M,
                    radial_speed: float = RADIAL_SPEED_MPS) -> list[WeeklyEvalRow]:
    """Learning-curve evaluation over cumulative training weeks.

    ``train_by_week`` is a list of weekly batches of (Trajectory, label)
    pairs; ``test_set`` is a fixed batch of the same shape. For each prefix
    of weeks, the training trajectories are encoded and clustered, clusters
    take their majority training label, and held-out prefixes are classified
    through their nearest centroid. Returns one row per cumulative prefix.
    """
    rows = []
    train: list = []
    for w, batch in enumerate(train_by_week, start=1):
        train.extend(batch)
        feats = [encode(t, regions, near_m=near_m, radial_speed=radial_speed)
                 for t, _ in train]
        labels = [label for _, label in train]
        clusters = cluster_nightly(feats, k_range=k_range, seed=seed,
                                   restarts=restarts)
        label_map = _cluster_label_map(clusters, labels)
        true_labels, predicted = [], []
        for traj, label in test_set:
            res = classify_partial(
                clusters, traj, regions, prefix_fraction=prefix_fraction,
                near_m=near_m, radial_speed=radial_speed,
            )
            true_labels.append(label)
            predicted.append(label_map.get(res.cluster, "<none>"))
        recall, precision, f1 = _macro_prf(true_labels, predicted)
        rows.append(WeeklyEvalRow(
            weeks=f"1-{w}" if w > 1 else "1",
            count=len(train),
            k=clusters.k,
            recall=recall,
            precision=precision,
            f1=f1,
        ))
    return rows


def weekly_eval_csv(rows) -> str:
    lines = ["weeks,count,K,recall,precision,F1"]
    for r in rows:
        lines.append(
            f"{r.weeks},{r.count},{r.k},{r.recall:.4f},{r.precision:.4f},{r.f1:.4f}"
        )
    return "\n".join(lines) + "\n"


# -- serialization ------------------------------------------------------------

def regions_to_dict(regions) -> dict:
    return {
        "regions": [
            {"name": r.name, "kind": r.kind, "vertices": [list(v) for v in r.vertices]}
            for r in sorted(regions, key=lambda r: r.name)
        ]
    }


def regions_from_dict(data: dict) -> list[SemanticRegion]:
    return [
        SemanticRegion(
            name=rd["name"], kind=rd["kind"],
            vertices=tuple(tuple(v) for v in rd["vertices"]),
        )
        for rd in data["regions"]
    ]


def clusters_to_dict(clusters: ActivityClusters) -> dict:
    return {
        "k": clusters.k,
        "centroids": [[float(v) for v in row] for row in clusters.centroids],
        "assignments": list(clusters.assignments),
        "tau": clusters.tau,
        "seed": clusters.seed,
        "n_features": clusters.n_features,
        "silhouette_by_k": {str(k): v for k, v in clusters.silhouette_by_k.items()},
    }


def clusters_from_dict(data: dict) -> ActivityClusters:
    return ActivityClusters(
        k=int(data["k"]),
        centroids=np.asarray(data["centroids"], dtype=np.float64),
        assignments=tuple(int(v) for v in data["assignments"]),
        tau=float(data["tau"]),
        seed=int(data["seed"]),
        n_features=int(data["n_features"]),
        silhouette_by_k={int(k): float(v) for k, v in data["silhouette_by_k"].items()},
    )
