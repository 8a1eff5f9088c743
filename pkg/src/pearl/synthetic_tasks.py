"""Deterministic synthetic task pairs with known ground-truth rewards.

Segments are goal-approach paths of graded quality: the best segment walks
straight at the goal, the worst is a pure random walk, and the grades in
between mix the two. The target task applies a geometric transform (identity,
rotation, uniform scale, or zero-padding of the state space) to a set built
from the same seeded stream, so with equal sizes and no noise the two sides
are exact geometric copies — which is what makes the alignment and transfer
exactness checks well-posed. Per-segment Gaussian noise, when requested, is
drawn from side-specific streams so the two sides disagree.

Also home to the brute-force oracles used to validate the solver and the
label-transfer path: exhaustive permutation-coupling search and a direct
four-index label-transfer summation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import CoverageError, SamplingError
from .label_transfer import ABSTAIN_THRESHOLD, PreferenceDataset, PreferenceRecord
from .ot_align import TransportPlan
from .trajectory import (
    DistanceMatrix,
    TrajectorySegment,
    TrajectorySet,
    flattened_matrix,
    pairwise_distance,
)

VALID_TRANSFORMS = ("identity", "rotation", "uniform_scale", "dim_pad")

DISTINCT_DISTANCE_TOL = 1e-9
MAX_GENERATION_ATTEMPTS = 64


@dataclass
class TaskSpec:
    """Everything needed to generate one source/target task pair."""

    state_dim: int = 2
    action_dim: int = 2
    horizon: int = 8
    goal: np.ndarray | None = None
    transform: str = "identity"
    rotation_angle: float = 0.0
    scale_factor: float = 1.0
    pad_dims: int = 0
    noise_scale: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.horizon < 2:
            raise ValueError("horizon must be >= 2")
        if self.state_dim < 1 or self.action_dim < 0:
            raise ValueError("state_dim must be >= 1 and action_dim >= 0")
        if self.transform not in VALID_TRANSFORMS:
            raise ValueError(f"transform must be one of {VALID_TRANSFORMS}")
        if self.transform == "uniform_scale" and self.scale_factor <= 0:
            raise ValueError("scale_factor must be positive")
        if self.transform == "rotation" and self.state_dim < 2:
            raise ValueError("rotation requires state_dim >= 2")
        if self.transform == "dim_pad" and self.pad_dims < 1:
            raise ValueError("dim_pad requires pad_dims >= 1")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be nonnegative")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        if self.goal is not None:
            self.goal = np.asarray(self.goal, dtype=np.float64)
            if self.goal.shape != (self.state_dim,):
                raise ValueError("goal must be a state-space point")

    def resolved_goal(self) -> np.ndarray:
        if self.goal is None:
            return np.ones(self.state_dim)
        return self.goal

    def to_dict(self) -> dict:
        return {
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "horizon": self.horizon,
            "goal": self.resolved_goal().tolist(),
            "transform": self.transform,
            "rotation_angle": self.rotation_angle,
            "scale_factor": self.scale_factor,
            "pad_dims": self.pad_dims,
            "noise_scale": self.noise_scale,
            "seed": self.seed,
        }


@dataclass
class GroundTruthReward:
    """Scripted reward: negative Euclidean distance from state to goal."""

    goal: np.ndarray
    kind: str = "negative-distance-to-goal"

    def __post_init__(self) -> None:
        if self.kind != "negative-distance-to-goal":
            raise ValueError(f"unknown reward kind {self.kind!r}")
        self.goal = np.asarray(self.goal, dtype=np.float64)

    def reward(self, state: np.ndarray, action: np.ndarray) -> float:
        del action  # reward depends on the state only
        return -float(np.linalg.norm(np.asarray(state, dtype=np.float64) - self.goal))

    def segment_return(self, segment: TrajectorySegment) -> float:
        return -float(np.linalg.norm(segment.states - self.goal[None, :], axis=1).sum())


@dataclass
class TaskPair:
    """A generated source/target pair with both ground-truth rewards."""

    source: TrajectorySet
    source_reward: GroundTruthReward
    target: TrajectorySet
    target_reward: GroundTruthReward


def _goal_approach_segments(
    spec: TaskSpec, count: int, rng: np.random.Generator
) -> list[TrajectorySegment]:
    """Paths graded from straight-to-goal (quality 1) down to random walk (0)."""
    goal = spec.resolved_goal()
    qualities = np.linspace(1.0, 0.0, count)
    step_scale = 2.0 * float(np.linalg.norm(goal) + 1.0) / spec.horizon
    segments = []
    for quality in qualities:
        state = rng.uniform(-1.0, 1.0, size=spec.state_dim)
        states = np.empty((spec.horizon, spec.state_dim))
        actions = np.empty((spec.horizon, spec.action_dim))
        for t in range(spec.horizon):
            states[t] = state
            drift = quality * (goal - state) / (spec.horizon - t)
            wander = (1.0 - quality) * step_scale * rng.normal(size=spec.state_dim)
            step = drift + wander
            if spec.action_dim <= spec.state_dim:
                actions[t] = step[: spec.action_dim]
            else:
                actions[t, : spec.state_dim] = step
                actions[t, spec.state_dim :] = 0.0
            state = state + step
        segments.append(TrajectorySegment(states=states, actions=actions))
    return segments


def _add_segment_noise(
    segments: list[TrajectorySegment], noise_scale: float, rng: np.random.Generator
) -> list[TrajectorySegment]:
    """Perturb every coordinate so the expected perturbation norm is
    noise_scale x (clean flattened diameter)."""
    if noise_scale == 0.0:
        return segments
    flat = np.stack(
        [np.hstack([s.states, s.actions]).ravel() for s in segments]
    )
    diffs = flat[:, None, :] - flat[None, :, :]
    diameter = float(np.sqrt((diffs**2).sum(axis=2)).max())
    per_coord = noise_scale * diameter / np.sqrt(flat.shape[1])
    noisy = []
    for seg in segments:
        noisy.append(
            TrajectorySegment(
                states=seg.states + per_coord * rng.normal(size=seg.states.shape),
                actions=seg.actions + per_coord * rng.normal(size=seg.actions.shape),
            )
        )
    return noisy


def _rotation_matrix(dim: int, angle: float) -> np.ndarray:
    rot = np.eye(dim)
    rot[0, 0] = np.cos(angle)
    rot[0, 1] = -np.sin(angle)
    rot[1, 0] = np.sin(angle)
    rot[1, 1] = np.cos(angle)
    return rot


def _apply_transform(
    spec: TaskSpec, segments: list[TrajectorySegment], goal: np.ndarray
) -> tuple[list[TrajectorySegment], np.ndarray]:
    """Map a clean set into the target task's geometry, goal included."""
    if spec.transform == "identity":
        return list(segments), goal.copy()
    if spec.transform == "rotation":
        rot_s = _rotation_matrix(spec.state_dim, spec.rotation_angle)
        out = []
        for seg in segments:
            actions = seg.actions
            if spec.action_dim >= 2:
                rot_a = _rotation_matrix(spec.action_dim, spec.rotation_angle)
                actions = actions @ rot_a.T
            out.append(TrajectorySegment(states=seg.states @ rot_s.T, actions=actions))
        return out, rot_s @ goal
    if spec.transform == "uniform_scale":
        c = spec.scale_factor
        out = [
            TrajectorySegment(states=c * seg.states, actions=c * seg.actions)
            for seg in segments
        ]
        return out, c * goal
    # dim_pad: extra zero state dimensions; actions untouched
    pad = spec.pad_dims
    out = [
        TrajectorySegment(
            states=np.hstack([seg.states, np.zeros((seg.length, pad))]),
            actions=seg.actions,
        )
        for seg in segments
    ]
    return out, np.concatenate([goal, np.zeros(pad)])


def _all_distances_distinct(matrix: DistanceMatrix) -> bool:
    values = matrix.values
    n = values.shape[0]
    upper = values[np.triu_indices(n, k=1)]
    if upper.size < 2:
        return True
    ordered = np.sort(upper)
    return bool((np.diff(ordered) > DISTINCT_DISTANCE_TOL).all())


def generate_task_pair(spec: TaskSpec, m: int, n: int) -> TaskPair:
    """Generate a source set of m segments and a transformed target of n.

    Both sides re-run the same seeded path construction (so equal sizes with
    zero noise give exact pre-transform copies); noise streams are
    side-specific. Re-seeds internally until all pairwise distances on both
    sides are mutually distinct, which the alignment exactness checks rely on.
    """
    if m < 2 or n < 2:
        raise ValueError("both sides need at least 2 segments")
    for attempt in range(MAX_GENERATION_ATTEMPTS):
        source_clean = _goal_approach_segments(
            spec, m, np.random.default_rng([spec.seed, attempt, 0])
        )
        target_clean = _goal_approach_segments(
            spec, n, np.random.default_rng([spec.seed, attempt, 0])
        )
        source_segments = _add_segment_noise(
            source_clean, spec.noise_scale, np.random.default_rng([spec.seed, attempt, 1])
        )
        goal = spec.resolved_goal()
        transformed, target_goal = _apply_transform(spec, target_clean, goal)
        target_segments = _add_segment_noise(
            transformed, spec.noise_scale, np.random.default_rng([spec.seed, attempt, 2])
        )
        source_set = TrajectorySet.from_segments(source_segments)
        target_set = TrajectorySet.from_segments(target_segments)
        if _all_distances_distinct(
            pairwise_distance(source_set, "euclidean")
        ) and _all_distances_distinct(pairwise_distance(target_set, "euclidean")):
            return TaskPair(
                source=source_set,
                source_reward=GroundTruthReward(goal=goal),
                target=target_set,
                target_reward=GroundTruthReward(goal=target_goal),
            )
    raise SamplingError(
        f"could not generate distinct-distance sets in {MAX_GENERATION_ATTEMPTS} attempts"
    )


def segment_returns(traj_set: TrajectorySet, reward: GroundTruthReward) -> np.ndarray:
    """Ground-truth return of every segment in the set."""
    return np.array([reward.segment_return(seg) for seg in traj_set.segments])


def scripted_labels(traj_set: TrajectorySet, reward: GroundTruthReward) -> PreferenceDataset:
    """Labels for all segment pairs from ground-truth returns.

    z = 0 when the first segment's return is higher, 1 when lower, 0.5 when
    equal within 1e-12.
    """
    returns = segment_returns(traj_set, reward)
    records = []
    for i in range(len(traj_set)):
        for j in range(i + 1, len(traj_set)):
            if abs(returns[i] - returns[j]) <= 1e-12:
                z = 0.5
            elif returns[i] > returns[j]:
                z = 0.0
            else:
                z = 1.0
            records.append(PreferenceRecord(first=i, second=j, label=z))
    return PreferenceDataset(records=records, over=traj_set)


def flip_labels(dataset: PreferenceDataset, fraction: float, seed: int = 0) -> PreferenceDataset:
    """Complement the labels of round(fraction * count) records, seeded.

    Records are visited in a seeded random order; tied records (0.5) are
    skipped in favor of the next unflipped binary record. If the dataset has
    fewer binary records than requested flips, all of them flip.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    n_flips = int(round(fraction * len(dataset.records)))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset.records))
    to_flip: set[int] = set()
    for idx in order:
        if len(to_flip) == n_flips:
            break
        if dataset.records[int(idx)].label != 0.5:
            to_flip.add(int(idx))
    records = []
    for idx, rec in enumerate(dataset.records):
        label = 1.0 - rec.label if idx in to_flip else rec.label
        records.append(
            PreferenceRecord(
                first=rec.first,
                second=rec.second,
                label=label,
                raw_label=rec.raw_label,
                normalized_label=rec.normalized_label,
            )
        )
    return PreferenceDataset(records=records, over=dataset.over)


def brute_force_align(c_s: DistanceMatrix, c_t: DistanceMatrix) -> tuple[tuple[int, ...], float]:
    """Exhaustive search over permutation couplings for the alignment optimum.

    Each permutation pi induces the coupling T[i, pi(i)] = 1/M; the returned
    permutation minimizes the quadratic alignment objective, with ties broken
    by lexicographic permutation order.
    """
    s = c_s.values if isinstance(c_s, DistanceMatrix) else np.asarray(c_s, dtype=np.float64)
    t = c_t.values if isinstance(c_t, DistanceMatrix) else np.asarray(c_t, dtype=np.float64)
    m = s.shape[0]
    if t.shape[0] != m:
        raise ValueError("brute-force alignment needs equal-size sides")
    if m > 8:
        raise ValueError("brute-force alignment is limited to 8 segments")
    best_perm: tuple[int, ...] | None = None
    best_value = np.inf
    for perm in itertools.permutations(range(m)):
        idx = np.asarray(perm)
        diff = s - t[np.ix_(idx, idx)]
        value = float((diff * diff).sum()) / (m * m)
        if value < best_value:
            best_value = value
            best_perm = perm
    assert best_perm is not None
    return best_perm, best_value


def brute_force_transfer(
    plan: TransportPlan,
    source: PreferenceDataset,
    abstain_threshold: float = ABSTAIN_THRESHOLD,
) -> dict[tuple[int, int], float | None]:
    """Raw transferred labels for every target pair by direct summation.

    Independent of the matrix-forming transfer path: walks all four indices,
    multiplying coupling entries inline. None marks abstention (no mass at or
    above abstain_threshold anywhere for that pair).
    """
    values = plan.values
    m, n = values.shape
    table: dict[tuple[int, int], float] = {}
    for rec in source.records:
        table[(rec.first, rec.second)] = rec.label
        table[(rec.second, rec.first)] = 1.0 - rec.label
    out: dict[tuple[int, int], float | None] = {}
    for j in range(n):
        for j_prime in range(j + 1, n):
            max_mass = 0.0
            total = 0.0
            for i in range(m):
                for i_prime in range(m):
                    mass = values[i, j] * values[i_prime, j_prime]
                    if mass > max_mass:
                        max_mass = mass
                    if i == i_prime:
                        continue
                    label = table.get((i, i_prime))
                    if label is None:
                        if mass >= abstain_threshold:
                            raise CoverageError(
                                f"no source label for pair ({i}, {i_prime})"
                            )
                        continue
                    total += mass * label
            out[(j, j_prime)] = None if max_mass < abstain_threshold else total
    return out
