"""Trajectory data model: segments, weighted segment sets, dataset files,
intra-task distance matrices, and the seeded k-means used for balanced sampling.

A segment is a fixed-horizon sequence of (state, action) pairs. A trajectory
set is a discrete probability measure over segments: every segment carries a
weight, and weights sum to one. Distances between segments are computed on
flattened state-action vectors, which requires every segment in a set to share
the same horizon and dimensions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy.spatial.distance import cdist

from .errors import (
    DatasetFormatError,
    DegenerateInputError,
    DimensionError,
    SamplingError,
)

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, typing only
    from .label_transfer import PreferenceRecord

WEIGHT_SUM_TOL = 1e-12

VALID_METRICS = ("euclidean", "cosine")


@dataclass
class TrajectorySegment:
    """One fixed-length sequence of states and actions.

    states: (H, d_s) array; actions: (H, d_a) array. Row t of each holds the
    state observed at step t and the action taken from it.
    """

    states: np.ndarray
    actions: np.ndarray

    def __post_init__(self) -> None:
        self.states = np.atleast_2d(np.asarray(self.states, dtype=np.float64))
        self.actions = np.atleast_2d(np.asarray(self.actions, dtype=np.float64))
        if self.states.ndim != 2 or self.actions.ndim != 2:
            raise DimensionError("states and actions must be 2-D arrays")
        if self.states.shape[0] < 1:
            raise DimensionError("segment must have at least one timestep")
        if self.states.shape[0] != self.actions.shape[0]:
            raise DimensionError(
                f"states have {self.states.shape[0]} rows but actions have "
                f"{self.actions.shape[0]}"
            )
        if not (np.isfinite(self.states).all() and np.isfinite(self.actions).all()):
            raise ValueError("segment entries must be finite")

    @property
    def length(self) -> int:
        return self.states.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def action_dim(self) -> int:
        return self.actions.shape[1]


@dataclass
class TrajectorySet:
    """An ordered collection of segments with a probability weight per segment."""

    segments: list[TrajectorySegment]
    weights: np.ndarray

    def __post_init__(self) -> None:
        if not self.segments:
            raise DimensionError("trajectory set must contain at least one segment")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (len(self.segments),):
            raise DimensionError(
                f"weights must have shape ({len(self.segments)},), "
                f"got {self.weights.shape}"
            )
        if (self.weights < 0).any():
            raise ValueError("weights must be nonnegative")
        if abs(float(self.weights.sum()) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError("weights must sum to 1")
        first = self.segments[0]
        for k, seg in enumerate(self.segments):
            if (seg.state_dim, seg.action_dim) != (first.state_dim, first.action_dim):
                raise DimensionError(
                    f"segment {k} has dims ({seg.state_dim}, {seg.action_dim}), "
                    f"expected ({first.state_dim}, {first.action_dim})"
                )
            if seg.length != first.length:
                raise DimensionError(
                    f"segment {k} has length {seg.length}, expected {first.length}"
                )

    @classmethod
    def from_segments(
        cls, segments: list[TrajectorySegment], weights=None
    ) -> "TrajectorySet":
        """Build a set; weights default to uniform (1/n each)."""
        if weights is None:
            n = len(segments)
            weights = np.full(n, 1.0 / n) if n else np.zeros(0)
        return cls(segments=segments, weights=weights)

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def horizon(self) -> int:
        return self.segments[0].length

    @property
    def state_dim(self) -> int:
        return self.segments[0].state_dim

    @property
    def action_dim(self) -> int:
        return self.segments[0].action_dim


@dataclass
class DistanceMatrix:
    """Symmetric nonnegative pairwise distance matrix with its metric tag."""

    values: np.ndarray
    metric_tag: str

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise DimensionError("distance matrix must be square")
        if self.metric_tag not in VALID_METRICS:
            raise ValueError(f"unknown metric tag {self.metric_tag!r}")
        if not np.isfinite(self.values).all():
            raise ValueError("distance matrix entries must be finite")
        if (self.values < 0).any():
            raise ValueError("distances must be nonnegative")
        if np.abs(self.values - self.values.T).max() > 1e-10:
            raise ValueError("distance matrix must be symmetric")
        if np.abs(np.diag(self.values)).max() > 1e-10:
            raise ValueError("distance matrix diagonal must be zero")

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass
class ClusterAssignment:
    """K-means result: a cluster index per point and the final centroids.

    sse_history records total within-cluster squared error after each Lloyd
    assignment step (used to check the iteration is non-increasing).
    """

    labels: np.ndarray
    centroids: np.ndarray
    sse_history: list[float] = field(default_factory=list)

    @property
    def num_clusters(self) -> int:
        return self.centroids.shape[0]


def flatten(segment: TrajectorySegment) -> np.ndarray:
    """Concatenate a segment timestep-major: [s_1, a_1, s_2, a_2, ...]."""
    return np.hstack([segment.states, segment.actions]).ravel()


def unflatten(vector: np.ndarray, horizon: int, state_dim: int, action_dim: int) -> TrajectorySegment:
    """Inverse of :func:`flatten` for fixed (horizon, state_dim, action_dim)."""
    vector = np.asarray(vector, dtype=np.float64)
    expected = horizon * (state_dim + action_dim)
    if vector.shape != (expected,):
        raise DimensionError(f"expected a vector of length {expected}, got {vector.shape}")
    steps = vector.reshape(horizon, state_dim + action_dim)
    return TrajectorySegment(states=steps[:, :state_dim], actions=steps[:, state_dim:])


def flattened_matrix(traj_set: TrajectorySet) -> np.ndarray:
    """Stack every segment's flattened vector into an (n, H*(d_s+d_a)) matrix."""
    return np.stack([flatten(seg) for seg in traj_set.segments])


def pairwise_distance(traj_set: TrajectorySet, metric: str = "euclidean") -> DistanceMatrix:
    """Pairwise distances between all segments of a set, on flattened vectors.

    euclidean: plain L2 distance. cosine: 1 - cosine similarity, clamped to
    [0, 2]; rejects zero vectors, for which cosine similarity is undefined.
    The diagonal is set to exactly zero for both metrics.
    """
    if metric not in VALID_METRICS:
        raise ValueError(f"metric must be one of {VALID_METRICS}, got {metric!r}")
    flat = flattened_matrix(traj_set)
    if metric == "cosine":
        norms = np.linalg.norm(flat, axis=1)
        if (norms == 0).any():
            bad = int(np.argmax(norms == 0))
            raise DegenerateInputError(
                f"segment {bad} flattens to the zero vector; cosine distance undefined"
            )
        values = np.clip(cdist(flat, flat, metric="cosine"), 0.0, 2.0)
    else:
        values = cdist(flat, flat, metric="euclidean")
    np.fill_diagonal(values, 0.0)
    return DistanceMatrix(values=values, metric_tag=metric)


def kmeans_cluster(
    traj_set: TrajectorySet, k: int, max_iters: int = 100, seed: int = 0
) -> ClusterAssignment:
    """Lloyd's k-means on flattened segments, deterministic for a fixed seed.

    Initial centroids are k distinct data points chosen by the seeded
    generator. An empty cluster is re-seeded from the point farthest from its
    assigned centroid. Ties in the point-to-centroid argmin break toward the
    lowest cluster index.
    """
    n = len(traj_set)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds number of segments {n}")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    points = flattened_matrix(traj_set)
    rng = np.random.default_rng(seed)
    centroids = points[rng.choice(n, size=k, replace=False)].copy()
    labels = np.full(n, -1, dtype=np.int64)
    sse_history: list[float] = []
    for _ in range(max_iters):
        sq_dists = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(sq_dists, axis=1)
        # Re-seed any empty cluster from the current farthest point.
        for c in range(k):
            if not (new_labels == c).any():
                point_err = sq_dists[np.arange(n), new_labels]
                far = int(np.argmax(point_err))
                centroids[c] = points[far]
                sq_dists = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
                new_labels = np.argmin(sq_dists, axis=1)
        sse_history.append(float(sq_dists[np.arange(n), new_labels].sum()))
        converged = (new_labels == labels).all()
        labels = new_labels
        for c in range(k):
            centroids[c] = points[labels == c].mean(axis=0)
        if converged:
            break
    return ClusterAssignment(labels=labels, centroids=centroids, sse_history=sse_history)


def sample_balanced(
    traj_set: TrajectorySet, assignment: ClusterAssignment, n: int, seed: int = 0
) -> tuple[TrajectorySet, np.ndarray]:
    """Draw n/2 segments from each of two clusters, without replacement.

    Returns the uniformly weighted subset and the selected indices into the
    original set (needed to map per-subset labels back to global indices).
    """
    if assignment.num_clusters != 2:
        raise ValueError("balanced sampling requires a 2-cluster assignment")
    if n < 2 or n % 2 != 0:
        raise ValueError("n must be a positive even integer")
    if assignment.labels.shape[0] != len(traj_set):
        raise DimensionError("assignment does not cover this trajectory set")
    rng = np.random.default_rng(seed)
    per_cluster = n // 2
    chosen: list[np.ndarray] = []
    for c in range(2):
        members = np.flatnonzero(assignment.labels == c)
        if members.size < per_cluster:
            raise SamplingError(
                f"cluster {c} has {members.size} segments; need {per_cluster}"
            )
        chosen.append(rng.choice(members, size=per_cluster, replace=False))
    indices = np.concatenate(chosen)
    subset = TrajectorySet.from_segments([traj_set.segments[int(i)] for i in indices])
    return subset, indices


def _parse_segment(
    entry: object, index: int, d_s: int, d_a: int, horizon: int
) -> TrajectorySegment:
    if not isinstance(entry, dict) or "states" not in entry or "actions" not in entry:
        raise DatasetFormatError(f"segment {index}: expected an object with states/actions")
    try:
        states = np.asarray(entry["states"], dtype=np.float64)
        actions = np.asarray(entry["actions"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise DatasetFormatError(f"segment {index}: non-numeric entries ({exc})") from exc
    if states.shape != (horizon, d_s):
        raise DimensionError(
            f"segment {index}: states shape {states.shape}, expected ({horizon}, {d_s})"
        )
    if actions.shape != (horizon, d_a):
        raise DimensionError(
            f"segment {index}: actions shape {actions.shape}, expected ({horizon}, {d_a})"
        )
    return TrajectorySegment(states=states, actions=actions)


def load_dataset(path) -> tuple[TrajectorySet, "list[PreferenceRecord] | None"]:
    """Read a dataset file: segments, optional weights, optional preferences.

    The file is JSON with fields d_s, d_a, H, segments=[{states, actions}],
    optional weights, optional preferences=[{i, j, z}]. Missing weights default
    to uniform. Preference records flagged "abstained": true carry no usable
    label and are skipped. Unknown top-level keys are ignored.
    """
    from .label_transfer import PreferenceRecord

    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise DatasetFormatError(f"{path}: top level must be an object")
    for key in ("d_s", "d_a", "H", "segments"):
        if key not in raw:
            raise DatasetFormatError(f"{path}: missing required field {key!r}")
    d_s, d_a, horizon = int(raw["d_s"]), int(raw["d_a"]), int(raw["H"])
    entries = raw["segments"]
    if not isinstance(entries, list) or not entries:
        raise DatasetFormatError(f"{path}: segments must be a non-empty array")
    segments = [
        _parse_segment(entry, i, d_s, d_a, horizon) for i, entry in enumerate(entries)
    ]
    weights = raw.get("weights")
    try:
        traj_set = TrajectorySet.from_segments(
            segments, None if weights is None else np.asarray(weights, dtype=np.float64)
        )
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from exc

    prefs_raw = raw.get("preferences")
    if prefs_raw is None:
        return traj_set, None
    if not isinstance(prefs_raw, list):
        raise DatasetFormatError(f"{path}: preferences must be an array")
    records: list[PreferenceRecord] = []
    for r, entry in enumerate(prefs_raw):
        if not isinstance(entry, dict):
            raise DatasetFormatError(f"preference record {r}: expected an object")
        if entry.get("abstained"):
            continue
        try:
            i, j, z = int(entry["i"]), int(entry["j"]), float(entry["z"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(
                f"preference record {r}: needs integer i, j and numeric z ({exc})"
            ) from exc
        if not (0 <= i < len(segments) and 0 <= j < len(segments)):
            raise DatasetFormatError(
                f"preference record {r}: segment index out of range (i={i}, j={j})"
            )
        record = PreferenceRecord(first=i, second=j, label=z)
        if "raw_label" in entry and entry["raw_label"] is not None:
            record.raw_label = float(entry["raw_label"])
        if "normalized_label" in entry and entry["normalized_label"] is not None:
            record.normalized_label = float(entry["normalized_label"])
        records.append(record)
    return traj_set, records


def dataset_to_dict(
    traj_set: TrajectorySet,
    preferences=None,
    abstained_pairs=None,
    extra_fields=None,
) -> dict:
    """Assemble the JSON-serializable dataset structure (see load_dataset)."""
    out: dict = {
        "d_s": traj_set.state_dim,
        "d_a": traj_set.action_dim,
        "H": traj_set.horizon,
        "segments": [
            {"states": seg.states.tolist(), "actions": seg.actions.tolist()}
            for seg in traj_set.segments
        ],
        "weights": traj_set.weights.tolist(),
    }
    if preferences is not None:
        prefs = []
        for rec in preferences:
            entry: dict = {"i": rec.first, "j": rec.second, "z": rec.label}
            if rec.raw_label is not None:
                entry["raw_label"] = rec.raw_label
            if rec.normalized_label is not None:
                entry["normalized_label"] = rec.normalized_label
                entry["abstained"] = False
            prefs.append(entry)
        for (j, j_prime) in abstained_pairs or []:
            prefs.append({"i": int(j), "j": int(j_prime), "z": None, "abstained": True})
        out["preferences"] = prefs
    if extra_fields:
        out.update(extra_fields)
    return out


def save_dataset(path, traj_set: TrajectorySet, preferences=None, abstained_pairs=None, extra_fields=None) -> None:
    """Write a dataset file; see load_dataset for the format."""
    payload = dataset_to_dict(traj_set, preferences, abstained_pairs, extra_fields)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
