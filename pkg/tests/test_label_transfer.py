"""Label transfer through a coupling: pair matching, normalization, accuracy."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pearl.errors import CoverageError
from pearl.label_transfer import (
    PairMatchMatrix,
    PreferenceDataset,
    PreferenceRecord,
    binarize,
    compute_cpa_labels,
    cpa_accuracy,
    normalize_labels,
    pair_match,
    transfer_label,
)
from pearl.ot_align import TransportPlan
from pearl.synthetic_tasks import (
    TaskSpec,
    generate_task_pair,
    scripted_labels,
    segment_returns,
)
from pearl.trajectory import TrajectorySet, pairwise_distance

from conftest import make_set, sharp_config


def plan_from_columns(*columns):
    values = np.column_stack(columns)
    m, n = values.shape
    return TransportPlan(
        values=values,
        row_marginal=values.sum(axis=1),
        col_marginal=values.sum(axis=0),
    )


def total_order_dataset(over, returns):
    """All-pairs binary labels from a strict total order on returns."""
    records = []
    for i, j in itertools.combinations(range(len(returns)), 2):
        records.append(
            PreferenceRecord(first=i, second=j, label=0.0 if returns[i] > returns[j] else 1.0)
        )
    return PreferenceDataset(records=records, over=over)


# --- records and datasets -----------------------------------------------------


def test_record_rejects_self_pair():
    with pytest.raises(ValueError):
        PreferenceRecord(first=1, second=1, label=0.0)


def test_record_rejects_out_of_range_label():
    with pytest.raises(ValueError):
        PreferenceRecord(first=0, second=1, label=1.5)


def test_dataset_rejects_duplicate_unordered_pair(rng):
    ts = make_set(rng, count=3)
    records = [
        PreferenceRecord(first=0, second=1, label=1.0),
        PreferenceRecord(first=1, second=0, label=0.0),
    ]
    with pytest.raises(ValueError):
        PreferenceDataset(records=records, over=ts)


def test_dataset_rejects_index_out_of_range(rng):
    ts = make_set(rng, count=2)
    with pytest.raises(ValueError):
        PreferenceDataset(
            records=[PreferenceRecord(first=0, second=5, label=1.0)], over=ts
        )


# --- pair_match ---------------------------------------------------------------


def test_pair_match_sparse_single_entry():
    """Columns (0,0,0.25,0) and (0,0,0,0.25) give one 0.0625 at row 3, col 4."""
    col1 = np.array([0.0, 0.0, 0.25, 0.0])
    col2 = np.array([0.0, 0.0, 0.0, 0.25])
    filler = np.array([0.25, 0.25, 0.0, 0.0]) / 2
    plan = plan_from_columns(filler, col1, col2, filler)
    match = pair_match(plan, 1, 2)
    expected = np.zeros((4, 4))
    expected[2, 3] = 0.0625
    np.testing.assert_array_equal(match.values, expected)
    assert match.values[2, 3] == 0.25 * 0.25  # bit-for-bit


def test_pair_match_zero_column():
    plan = plan_from_columns(
        np.array([0.5, 0.5]), np.array([0.0, 0.0])
    )
    match = pair_match(plan, 0, 1)
    np.testing.assert_array_equal(match.values, np.zeros((2, 2)))


def test_pair_match_uniform_two_by_two():
    plan = plan_from_columns(np.array([0.25, 0.25]), np.array([0.25, 0.25]))
    match = pair_match(plan, 0, 1)
    np.testing.assert_array_equal(match.values, np.full((2, 2), 0.0625))


def test_pair_match_rejects_equal_indices():
    plan = plan_from_columns(np.array([0.5]), np.array([0.5]))
    with pytest.raises(ValueError):
        pair_match(plan, 0, 0)


@given(seed=st.integers(0, 2**32 - 1), m=st.integers(2, 5), n=st.integers(2, 5))
def test_pair_match_rank_and_mass(seed, m, n):
    rng = np.random.default_rng(seed)
    values = rng.uniform(size=(m, n))
    values /= values.sum()
    plan = TransportPlan(
        values=values, row_marginal=values.sum(axis=1), col_marginal=values.sum(axis=0)
    )
    j, jp = 0, n - 1
    match = pair_match(plan, j, jp)
    assert np.linalg.matrix_rank(match.values) <= 1
    np.testing.assert_allclose(
        match.values.sum(), values[:, j].sum() * values[:, jp].sum(), rtol=1e-12
    )


# --- transfer_label -----------------------------------------------------------


def test_transfer_single_term(rng):
    ts = make_set(rng, count=4)
    source = PreferenceDataset(
        records=[PreferenceRecord(first=2, second=3, label=1.0)], over=ts
    )
    a = np.zeros((4, 4))
    a[2, 3] = 0.0625
    match = PairMatchMatrix(values=a, target_pair=(1, 2))
    assert transfer_label(match, source) == 0.0625


def test_transfer_abstains_on_zero_matrix(rng):
    ts = make_set(rng, count=4)
    source = PreferenceDataset(
        records=[PreferenceRecord(first=0, second=1, label=1.0)], over=ts
    )
    match = PairMatchMatrix(values=np.zeros((4, 4)), target_pair=(0, 1))
    assert transfer_label(match, source) is None


def test_transfer_uniform_all_ties(rng):
    ts = make_set(rng, count=4)
    records = [
        PreferenceRecord(first=i, second=j, label=0.5)
        for i, j in itertools.combinations(range(4), 2)
    ]
    source = PreferenceDataset(records=records, over=ts)
    match = PairMatchMatrix(values=np.full((4, 4), 0.0625), target_pair=(0, 1))
    np.testing.assert_allclose(transfer_label(match, source), 12 * 0.0625 * 0.5)


def test_transfer_missing_label_with_mass_raises(rng):
    ts = make_set(rng, count=3)
    source = PreferenceDataset(
        records=[PreferenceRecord(first=0, second=1, label=1.0)], over=ts
    )
    a = np.zeros((3, 3))
    a[0, 2] = 0.1  # pair (0, 2) carries mass but has no label
    match = PairMatchMatrix(values=a, target_pair=(0, 1))
    with pytest.raises(CoverageError, match="0.*2"):
        transfer_label(match, source)


def test_transfer_ordered_complement(rng):
    """The reversed orientation of a stored pair contributes 1 - z."""
    ts = make_set(rng, count=2)
    source = PreferenceDataset(
        records=[PreferenceRecord(first=0, second=1, label=1.0)], over=ts
    )
    a = np.zeros((2, 2))
    a[1, 0] = 0.25  # ordered pair (1, 0): label is 1 - 1.0 = 0.0
    match = PairMatchMatrix(values=a, target_pair=(0, 1))
    assert transfer_label(match, source) == 0.0


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=50)
def test_transfer_antisymmetry_mass_identity(seed):
    """For binary total-order labels, raw(j,j') + raw(j',j) equals the total
    off-diagonal matching mass of the two orderings."""
    rng = np.random.default_rng(seed)
    m = 4
    ts = make_set(rng, count=m)
    returns = rng.normal(size=m)
    source = total_order_dataset(ts, returns)
    values = rng.uniform(size=(m, 3))
    values /= values.sum()
    plan = TransportPlan(
        values=values, row_marginal=values.sum(axis=1), col_marginal=values.sum(axis=0)
    )
    j, jp = 0, 2
    fwd = transfer_label(pair_match(plan, j, jp), source)
    rev = transfer_label(pair_match(plan, jp, j), source)
    a_fwd = np.outer(values[:, j], values[:, jp])
    a_rev = np.outer(values[:, jp], values[:, j])
    # complementary ordered labels pair up: the sum collects half the
    # combined off-diagonal mass of the two orderings (they are transposes)
    mass = 0.5 * ((a_fwd.sum() - np.trace(a_fwd)) + (a_rev.sum() - np.trace(a_rev)))
    np.testing.assert_allclose(fwd + rev, mass, rtol=1e-12)


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=50)
def test_transfer_matches_brute_force(seed):
    from pearl.synthetic_tasks import brute_force_transfer

    rng = np.random.default_rng(seed)
    m, n = 3, 3
    ts = make_set(rng, count=m)
    returns = rng.normal(size=m)
    source = total_order_dataset(ts, returns)
    values = rng.uniform(size=(m, n))
    values /= values.sum()
    plan = TransportPlan(
        values=values, row_marginal=values.sum(axis=1), col_marginal=values.sum(axis=0)
    )
    oracle = brute_force_transfer(plan, source)
    for (j, jp), expected in oracle.items():
        got = transfer_label(pair_match(plan, j, jp), source)
        assert got == expected  # identical accumulation order: exact equality


# --- normalization and binarization -------------------------------------------


def test_normalize_three_values():
    raw = [((0, 1), 0.1), ((0, 2), 0.2), ((1, 2), 0.4)]
    out = normalize_labels(raw)
    np.testing.assert_allclose([v for _, v in out], [0.0, 1 / 3, 1.0])


def test_normalize_degenerate_range():
    raw = [((0, 1), 0.7), ((0, 2), 0.7), ((1, 2), 0.7)]
    assert [v for _, v in normalize_labels(raw)] == [0.5, 0.5, 0.5]


def test_normalize_identity_on_unit_range():
    raw = [((0, 1), 0.0), ((0, 2), 1.0)]
    assert [v for _, v in normalize_labels(raw)] == [0.0, 1.0]


def test_normalize_passes_abstained_through():
    raw = [((0, 1), 0.2), ((0, 2), None), ((1, 2), 0.6)]
    out = normalize_labels(raw)
    assert out[1] == ((0, 2), None)
    np.testing.assert_allclose([out[0][1], out[2][1]], [0.0, 1.0])


def test_normalize_rejects_empty():
    with pytest.raises(ValueError):
        normalize_labels([])


def test_normalize_rejects_all_abstained():
    with pytest.raises(ValueError):
        normalize_labels([((0, 1), None)])


def test_binarize_branches():
    assert binarize(0.7) == 1
    assert binarize(0.5) == 0
    assert binarize(0.3) == 0


@given(seed=st.integers(0, 2**32 - 1), size=st.integers(2, 12))
@settings(max_examples=1000)
def test_binarize_normalize_affine_invariant(seed, size):
    rng = np.random.default_rng(seed)
    values = rng.normal(scale=10.0, size=size)
    scale = float(rng.uniform(0.01, 50.0))
    shift = float(rng.uniform(-100.0, 100.0))
    pairs = [((0, k + 1), float(v)) for k, v in enumerate(values)]
    transformed = [((0, k + 1), scale * float(v) + shift) for k, v in enumerate(values)]
    base = [binarize(v) for _, v in normalize_labels(pairs)]
    moved = [binarize(v) for _, v in normalize_labels(transformed)]
    assert base == moved


# --- compute_cpa_labels --------------------------------------------------------


def self_transfer_config(traj_set):
    c = pairwise_distance(traj_set)
    return sharp_config(c.values, c.values, traj_set.weights, traj_set.weights)


def test_cpa_self_transfer_is_exact():
    """Source aligned to itself relabels its own preferences exactly.

    The scripted generator orders segments best-to-worst, so every label is
    0.0 and the raw batch is degenerate; the decided defaults (degenerate ->
    0.5 -> binarize 0) reproduce the truth.
    """
    spec = TaskSpec(state_dim=2, action_dim=2, horizon=6, seed=11)
    pair = generate_task_pair(spec, 5, 5)
    source_prefs = scripted_labels(pair.source, pair.source_reward)
    result = compute_cpa_labels(
        pair.source, source_prefs, pair.source, gw_config=self_transfer_config(pair.source)
    )
    truth = PreferenceDataset(
        records=[
            PreferenceRecord(first=r.first, second=r.second, label=float(binarize(r.label)))
            for r in source_prefs.records
        ],
        over=pair.source,
    )
    assert cpa_accuracy(result.dataset, truth) == 100.0
    assert not result.abstained_pairs


def test_cpa_self_transfer_shuffled_order():
    """Self-transfer with a mixed-direction total order (non-degenerate raws)."""
    spec = TaskSpec(state_dim=2, action_dim=2, horizon=6, seed=17)
    pair = generate_task_pair(spec, 5, 5)
    shuffled_returns = np.random.default_rng(99).permutation(
        segment_returns(pair.source, pair.source_reward)
    )
    source_prefs = total_order_dataset(pair.source, shuffled_returns)
    result = compute_cpa_labels(
        pair.source, source_prefs, pair.source, gw_config=self_transfer_config(pair.source)
    )
    assert cpa_accuracy(result.dataset, source_prefs) == 100.0
    assert not result.abstained_pairs


def test_cpa_single_segment_empty(rng):
    source = make_set(rng, count=1)
    target = make_set(rng, count=1)
    source_prefs = PreferenceDataset(records=[], over=source)
    result = compute_cpa_labels(source, source_prefs, target)
    assert result.dataset.records == []
    assert result.abstained_pairs == []


def test_cpa_all_tied_sources_binarize_to_zero():
    spec = TaskSpec(state_dim=2, action_dim=2, horizon=6, seed=7)
    pair = generate_task_pair(spec, 4, 4)
    records = [
        PreferenceRecord(first=i, second=j, label=0.5)
        for i, j in itertools.combinations(range(4), 2)
    ]
    source_prefs = PreferenceDataset(records=records, over=pair.source)
    c_s = pairwise_distance(pair.source)
    c_t = pairwise_distance(pair.target)
    cfg = sharp_config(c_s.values, c_t.values, pair.source.weights, pair.target.weights)
    result = compute_cpa_labels(pair.source, source_prefs, pair.target, gw_config=cfg)
    assert len(result.dataset.records) == 6
    assert {r.label for r in result.dataset.records} == {0.0}
    assert {r.normalized_label for r in result.dataset.records} == {0.5}


# --- cpa_accuracy ---------------------------------------------------------------


def binary_dataset(ts, labels):
    records = [
        PreferenceRecord(first=i, second=j, label=z)
        for (i, j), z in labels.items()
    ]
    return PreferenceDataset(records=records, over=ts)


def test_accuracy_identical(rng):
    ts = make_set(rng, count=4)
    labels = {(0, 1): 1.0, (0, 2): 0.0, (1, 2): 1.0}
    d = binary_dataset(ts, labels)
    assert cpa_accuracy(d, d) == 100.0


def test_accuracy_half_flipped(rng):
    ts = make_set(rng, count=4)
    truth = binary_dataset(ts, {(0, 1): 1.0, (0, 2): 0.0, (1, 2): 1.0, (1, 3): 0.0})
    pred = binary_dataset(ts, {(0, 1): 1.0, (0, 2): 0.0, (1, 2): 0.0, (1, 3): 1.0})
    assert cpa_accuracy(pred, truth) == 50.0


def test_accuracy_four_of_six(rng):
    ts = make_set(rng, count=4)
    truth_labels = {(0, 1): 1.0, (0, 2): 1.0, (0, 3): 1.0, (1, 2): 1.0, (1, 3): 1.0, (2, 3): 1.0}
    pred_labels = dict(truth_labels)
    pred_labels[(0, 1)] = 0.0
    pred_labels[(1, 2)] = 0.0
    truth = binary_dataset(ts, truth_labels)
    pred = binary_dataset(ts, pred_labels)
    assert abs(cpa_accuracy(pred, truth) - 66.67) < 0.01


def test_accuracy_excludes_tied_truth(rng):
    ts = make_set(rng, count=3)
    truth = binary_dataset(ts, {(0, 1): 0.5, (0, 2): 1.0})
    pred = binary_dataset(ts, {(0, 1): 1.0, (0, 2): 1.0})
    assert cpa_accuracy(pred, truth) == 100.0
    assert cpa_accuracy(pred, truth, exclude_ties=False) == 50.0


def test_accuracy_orientation_normalized(rng):
    """(j, i) with label 1-z is the same statement as (i, j) with z."""
    ts = make_set(rng, count=2)
    truth = binary_dataset(ts, {(0, 1): 1.0})
    pred = PreferenceDataset(
        records=[PreferenceRecord(first=1, second=0, label=0.0)], over=ts
    )
    assert cpa_accuracy(pred, truth) == 100.0


def test_accuracy_no_shared_pairs(rng):
    ts = make_set(rng, count=4)
    a = binary_dataset(ts, {(0, 1): 1.0})
    b = binary_dataset(ts, {(2, 3): 1.0})
    with pytest.raises(ValueError):
        cpa_accuracy(a, b)
