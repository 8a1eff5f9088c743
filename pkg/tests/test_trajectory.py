"""Trajectory data model, distances, clustering, dataset I/O."""

import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pearl.errors import (
    DatasetFormatError,
    DegenerateInputError,
    DimensionError,
    SamplingError,
)
from pearl.trajectory import (
    ClusterAssignment,
    DistanceMatrix,
    TrajectorySegment,
    TrajectorySet,
    flatten,
    flattened_matrix,
    kmeans_cluster,
    load_dataset,
    pairwise_distance,
    sample_balanced,
    save_dataset,
    unflatten,
)

from conftest import make_segment, make_set


def scalar_set(values, state_dim=1):
    """H=1, d_a=0 segments at the given flattened scalar positions."""
    segs = [
        TrajectorySegment(states=np.full((1, state_dim), v), actions=np.zeros((1, 0)))
        for v in values
    ]
    return TrajectorySet.from_segments(segs)


# --- segments and sets ------------------------------------------------------


def test_segment_requires_matching_rows():
    with pytest.raises(DimensionError):
        TrajectorySegment(states=np.zeros((3, 2)), actions=np.zeros((2, 2)))


def test_segment_rejects_nonfinite():
    states = np.zeros((2, 1))
    states[0, 0] = np.nan
    with pytest.raises(ValueError):
        TrajectorySegment(states=states, actions=np.zeros((2, 1)))


def test_segment_requires_at_least_one_step():
    with pytest.raises(DimensionError):
        TrajectorySegment(states=np.zeros((0, 1)), actions=np.zeros((0, 1)))


def test_set_uniform_default_weights(rng):
    ts = make_set(rng, count=4)
    np.testing.assert_allclose(ts.weights, [0.25, 0.25, 0.25, 0.25])


def test_set_rejects_bad_weight_sum(rng):
    segs = [make_segment(rng) for _ in range(2)]
    with pytest.raises(ValueError, match="sum to 1"):
        TrajectorySet(segments=segs, weights=np.array([0.5, 0.4]))


def test_set_rejects_mixed_dims(rng):
    a = make_segment(rng, state_dim=2)
    b = make_segment(rng, state_dim=3)
    with pytest.raises(DimensionError):
        TrajectorySet.from_segments([a, b])


def test_set_rejects_mixed_horizons(rng):
    a = make_segment(rng, horizon=3)
    b = make_segment(rng, horizon=4)
    with pytest.raises(DimensionError):
        TrajectorySet.from_segments([a, b])


# --- flatten ----------------------------------------------------------------


def test_flatten_single_step():
    seg = TrajectorySegment(states=np.array([[2.0]]), actions=np.array([[3.0]]))
    np.testing.assert_array_equal(flatten(seg), [2.0, 3.0])


def test_flatten_timestep_major():
    seg = TrajectorySegment(
        states=np.array([[1.0], [0.0]]), actions=np.array([[0.0], [1.0]])
    )
    np.testing.assert_array_equal(flatten(seg), [1.0, 0.0, 0.0, 1.0])


@given(
    horizon=st.integers(1, 5),
    state_dim=st.integers(1, 4),
    action_dim=st.integers(0, 4),
    seed=st.integers(0, 2**32 - 1),
)
def test_flatten_roundtrip(horizon, state_dim, action_dim, seed):
    rng = np.random.default_rng(seed)
    seg = make_segment(rng, horizon, state_dim, action_dim)
    back = unflatten(flatten(seg), horizon, state_dim, action_dim)
    np.testing.assert_array_equal(back.states, seg.states)
    np.testing.assert_array_equal(back.actions, seg.actions)


def test_flattened_matrix_rows(rng):
    ts = make_set(rng, count=3)
    mat = flattened_matrix(ts)
    assert mat.shape == (3, 3 * 4)
    np.testing.assert_array_equal(mat[1], flatten(ts.segments[1]))


# --- pairwise distances -----------------------------------------------------


def test_identical_segments_zero_distance(rng):
    seg = make_segment(rng)
    twin = TrajectorySegment(states=seg.states.copy(), actions=seg.actions.copy())
    ts = TrajectorySet.from_segments([seg, twin])
    np.testing.assert_array_equal(pairwise_distance(ts).values, np.zeros((2, 2)))


def test_scalar_euclidean_oracle():
    ts = scalar_set([0.0, 3.0, 4.0])
    expected = [[0, 3, 4], [3, 0, 1], [4, 1, 0]]
    np.testing.assert_allclose(pairwise_distance(ts).values, expected)


def test_cosine_orthogonal_vectors():
    a = TrajectorySegment(states=np.array([[1.0, 0.0]]), actions=np.zeros((1, 0)))
    b = TrajectorySegment(states=np.array([[0.0, 1.0]]), actions=np.zeros((1, 0)))
    ts = TrajectorySet.from_segments([a, b])
    d = pairwise_distance(ts, metric="cosine")
    assert d.metric_tag == "cosine"
    np.testing.assert_allclose(d.values[0, 1], 1.0)


def test_cosine_rejects_zero_vector():
    ts = scalar_set([0.0, 1.0])
    with pytest.raises(DegenerateInputError):
        pairwise_distance(ts, metric="cosine")


def test_unknown_metric_rejected(small_set):
    with pytest.raises(ValueError):
        pairwise_distance(small_set, metric="manhattan")


@given(seed=st.integers(0, 2**32 - 1), metric=st.sampled_from(["euclidean", "cosine"]))
def test_distance_matrix_properties(seed, metric):
    rng = np.random.default_rng(seed)
    ts = make_set(rng, count=5)
    d = pairwise_distance(ts, metric=metric).values
    np.testing.assert_allclose(d, d.T, atol=1e-10)
    np.testing.assert_array_equal(np.diag(d), np.zeros(5))
    assert (d >= 0).all()


@given(seed=st.integers(0, 2**32 - 1))
def test_euclidean_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    ts = make_set(rng, count=5)
    d = pairwise_distance(ts).values
    for i, j, k in itertools.permutations(range(5), 3):
        assert d[i, j] <= d[i, k] + d[k, j] + 1e-9


def test_distance_matrix_validates_symmetry():
    bad = np.array([[0.0, 1.0], [2.0, 0.0]])
    with pytest.raises(ValueError):
        DistanceMatrix(values=bad, metric_tag="euclidean")


# --- k-means ----------------------------------------------------------------


def test_kmeans_separable_pair():
    ts = scalar_set([0.0, 10.0])
    out = kmeans_cluster(ts, k=2)
    assert out.labels[0] != out.labels[1]


def test_kmeans_two_blobs_matches_exhaustive_sse():
    points = [0.0, 0.1, 9.9, 10.0]
    ts = scalar_set(points)
    out = kmeans_cluster(ts, k=2, seed=0)
    assert out.labels[0] == out.labels[1]
    assert out.labels[2] == out.labels[3]
    assert out.labels[0] != out.labels[2]

    # exhaustive 2-partition oracle: the returned partition minimizes SSE
    def sse(groups):
        total = 0.0
        for g in groups:
            vals = np.array([points[i] for i in g])
            total += ((vals - vals.mean()) ** 2).sum()
        return total

    best = min(
        sse((part, tuple(i for i in range(4) if i not in part)))
        for r in range(1, 4)
        for part in itertools.combinations(range(4), r)
    )
    got = sse(
        (
            tuple(i for i in range(4) if out.labels[i] == 0),
            tuple(i for i in range(4) if out.labels[i] == 1),
        )
    )
    np.testing.assert_allclose(got, best)


def test_kmeans_k1_centroid_is_mean(rng):
    ts = make_set(rng, count=4)
    out = kmeans_cluster(ts, k=1)
    assert set(out.labels) == {0}
    np.testing.assert_allclose(out.centroids[0], flattened_matrix(ts).mean(axis=0))


def test_kmeans_k_too_large(rng):
    ts = make_set(rng, count=2)
    with pytest.raises(ValueError):
        kmeans_cluster(ts, k=3)


@given(seed=st.integers(0, 1000), k=st.integers(1, 3))
def test_kmeans_deterministic_and_sse_monotone(seed, k):
    rng = np.random.default_rng(seed)
    ts = make_set(rng, count=6)
    a = kmeans_cluster(ts, k=k, seed=seed)
    b = kmeans_cluster(ts, k=k, seed=seed)
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(a.centroids, b.centroids)
    hist = a.sse_history
    assert all(hist[i + 1] <= hist[i] + 1e-9 for i in range(len(hist) - 1))


def test_kmeans_centroids_are_member_means(rng):
    ts = make_set(rng, count=8)
    out = kmeans_cluster(ts, k=2, seed=3)
    mat = flattened_matrix(ts)
    for c in range(2):
        members = mat[out.labels == c]
        assert members.size
        np.testing.assert_allclose(out.centroids[c], members.mean(axis=0), atol=1e-8)


# --- balanced sampling ------------------------------------------------------


def balanced_fixture(sizes, rng):
    ts = make_set(rng, count=sum(sizes))
    labels = np.array([0] * sizes[0] + [1] * sizes[1])
    centroids = np.zeros((2, flattened_matrix(ts).shape[1]))
    return ts, ClusterAssignment(labels=labels, centroids=centroids)


def test_sample_balanced_exhaustive(rng):
    ts, assign = balanced_fixture((2, 2), rng)
    subset, indices = sample_balanced(ts, assign, n=4, seed=0)
    assert sorted(indices.tolist()) == [0, 1, 2, 3]
    np.testing.assert_allclose(subset.weights, [0.25] * 4)


def test_sample_balanced_counts(rng):
    ts, assign = balanced_fixture((3, 3), rng)
    subset, indices = sample_balanced(ts, assign, n=4, seed=1)
    assert len(subset) == 4
    labels = assign.labels[indices]
    assert (labels == 0).sum() == 2
    assert (labels == 1).sum() == 2


def test_sample_balanced_insufficient_cluster(rng):
    ts, assign = balanced_fixture((1, 5), rng)
    with pytest.raises(SamplingError, match="cluster 0"):
        sample_balanced(ts, assign, n=4, seed=0)


def test_sample_balanced_deterministic(rng):
    ts, assign = balanced_fixture((4, 4), rng)
    _, first = sample_balanced(ts, assign, n=4, seed=7)
    _, second = sample_balanced(ts, assign, n=4, seed=7)
    np.testing.assert_array_equal(first, second)


def test_sample_balanced_odd_n_rejected(rng):
    ts, assign = balanced_fixture((3, 3), rng)
    with pytest.raises(ValueError):
        sample_balanced(ts, assign, n=3, seed=0)


# --- dataset files ----------------------------------------------------------


def test_load_single_segment(tmp_path):
    payload = {
        "d_s": 1,
        "d_a": 1,
        "H": 2,
        "segments": [{"states": [[0.0], [1.0]], "actions": [[0.5], [0.5]]}],
    }
    path = tmp_path / "one.json"
    path.write_text(json.dumps(payload))
    ts, prefs = load_dataset(path)
    assert len(ts) == 1
    np.testing.assert_allclose(ts.weights, [1.0])
    assert prefs is None


def test_load_default_uniform_weights(tmp_path, rng):
    ts = make_set(rng, count=4)
    path = tmp_path / "four.json"
    save_dataset(path, ts)
    loaded = json.loads(path.read_text())
    del loaded["weights"]
    path.write_text(json.dumps(loaded))
    ts2, _ = load_dataset(path)
    np.testing.assert_allclose(ts2.weights, [0.25, 0.25, 0.25, 0.25])


def test_load_bad_weight_sum(tmp_path, rng):
    ts = make_set(rng, count=2)
    path = tmp_path / "bad.json"
    save_dataset(path, ts)
    doc = json.loads(path.read_text())
    doc["weights"] = [0.5, 0.4]
    path.write_text(json.dumps(doc))
    with pytest.raises(DatasetFormatError, match="weights must sum to 1"):
        load_dataset(path)


def test_load_rejects_missing_field(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text(json.dumps({"d_s": 1, "d_a": 1}))
    with pytest.raises(DatasetFormatError):
        load_dataset(path)


def test_load_rejects_wrong_state_shape(tmp_path):
    payload = {
        "d_s": 2,
        "d_a": 1,
        "H": 1,
        "segments": [{"states": [[0.0]], "actions": [[0.0]]}],
    }
    path = tmp_path / "dims.json"
    path.write_text(json.dumps(payload))
    with pytest.raises((DatasetFormatError, DimensionError)):
        load_dataset(path)


def test_roundtrip_with_preferences(tmp_path, rng):
    from pearl.label_transfer import PreferenceDataset, PreferenceRecord

    ts = make_set(rng, count=3)
    prefs = PreferenceDataset(
        records=[
            PreferenceRecord(first=0, second=1, label=1.0),
            PreferenceRecord(first=0, second=2, label=0.5),
        ],
        over=ts,
    )
    path = tmp_path / "prefs.json"
    save_dataset(path, ts, preferences=prefs.records)
    ts2, records = load_dataset(path)
    assert [(r.first, r.second, r.label) for r in records] == [
        (0, 1, 1.0),
        (0, 2, 0.5),
    ]
    for a, b in zip(ts.segments, ts2.segments):
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.actions, b.actions)


def test_load_rejects_out_of_range_preference(tmp_path, rng):
    ts = make_set(rng, count=2)
    path = tmp_path / "oor.json"
    save_dataset(path, ts)
    doc = json.loads(path.read_text())
    doc["preferences"] = [{"i": 0, "j": 5, "z": 1.0}]
    path.write_text(json.dumps(doc))
    with pytest.raises(DatasetFormatError):
        load_dataset(path)
