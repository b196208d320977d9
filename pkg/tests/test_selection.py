import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pul.clustering import kmeans
from pul.errors import InternalInvariantError, InvalidInputError
from pul.selection import (center_indices, l2_normalize, select_all, select_center_features,
                           select_reliable, selected_fraction)
from pul.types import ClusterState, validate_selection

from oracles import constrained_surrogate_minimum, naive_selection

LAMBDAS = (0.70, 0.75, 0.80, 0.85, 0.90)


def clustered(seed, N=30, E=4, K=4, nonneg=True):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((N, E))
    if nonneg:
        F = np.maximum(F, 0.0)
    state = select_center_features(F, kmeans(F, K, rng=rng))
    return F, state


def test_l2_normalize_hand_cases():
    out, flag = l2_normalize(np.array([[3.0, 4.0], [1.0, 0.0], [0.0, 0.0]]), return_degenerate=True)
    np.testing.assert_allclose(out, [[0.6, 0.8], [1.0, 0.0], [0.0, 0.0]])
    assert flag.tolist() == [False, False, True]


def test_center_tie_goes_to_lowest_index():
    F = np.array([[0.0, 1.0], [0.0, 3.0]])
    st_ = select_center_features(F, ClusterState(np.array([0, 0]), np.array([[0.0, 2.0]])))
    assert st_.center_indices.tolist() == [0]
    np.testing.assert_allclose(st_.center_features, [[0.0, 1.0]])


def test_singleton_cluster_center_is_the_sample():
    F = np.array([[2.0, 0.0], [0.0, 1.0], [0.0, 1.2]])
    st_ = select_center_features(F, ClusterState(np.array([0, 1, 1]), np.array([[2.0, 0.0], [0.0, 1.1]])))
    np.testing.assert_allclose(st_.center_features[0], [1.0, 0.0])


def test_empty_cluster_is_an_invariant_violation():
    F = np.array([[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(InternalInvariantError):
        center_indices(F, ClusterState(np.array([0, 0]), np.zeros((2, 2))))


def test_matches_naive_oracle_on_random_instances():
    for seed in range(30):
        F, state = clustered(seed)
        lam = np.random.default_rng(seed).uniform(0, 1)
        mask = select_reliable(l2_normalize(F), state, lam)
        v, centers = naive_selection(F, state.assignments, state.K, lam)
        np.testing.assert_array_equal(mask.v, v)
        assert state.center_indices.tolist() == centers


def test_lambda_grid_is_nested_and_keeps_every_cluster():
    for seed in range(20):
        F, state = clustered(seed)
        U = l2_normalize(F)
        masks = [select_reliable(U, state, lam) for lam in LAMBDAS]
        for lo, hi in zip(masks, masks[1:]):
            assert not (hi.v & ~lo.v).any()
        for m in masks:
            validate_selection(m, state.assignments, state.K)


def test_boundaries():
    F, state = clustered(3)
    U = l2_normalize(F)
    pos = np.abs(F) + 0.01
    pos_state = select_center_features(pos, kmeans(pos, 4, rng=np.random.default_rng(0)))
    assert select_reliable(l2_normalize(pos), pos_state, 0.0).v.all()
    just_below = select_reliable(U, state, np.nextafter(1.0, 0.0))
    centers = U[state.center_indices]
    dup = np.array([np.any(np.all(u == centers, axis=1)) for u in U])
    np.testing.assert_array_equal(just_below.v, dup)
    at_one = select_reliable(U, state, 1.0)
    assert sorted(at_one.indices.tolist()) == sorted(state.center_indices.tolist())
    with pytest.raises(InvalidInputError):
        select_reliable(U, state, 1.5)


def test_threshold_is_strict():
    F = np.array([[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]])
    state = select_center_features(F, ClusterState(np.zeros(3, int), np.array([[1.0, 0.0]])))
    mask = select_reliable(F, state, 0.6)
    assert mask.v.tolist() == [True, False, False]


def test_orthogonal_member_is_not_selected_at_lambda_zero():
    # rectified features with disjoint support give delta exactly 0
    F = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 0.0]])
    state = select_center_features(F, ClusterState(np.zeros(3, int), np.array([[1.0, 1 / 3]])))
    assert select_reliable(F / np.linalg.norm(F, axis=1, keepdims=True), state, 0.0).v.tolist() == \
        [True, False, True]


def test_zero_embedding_is_only_selected_as_forced_center():
    F = np.array([[1.0, 0.0], [0.0, 0.0], [0.9, 0.1], [0.0, 0.0]])
    state = select_center_features(F, ClusterState(np.array([0, 0, 0, 1]),
                                                   np.array([[1.9 / 3, 0.1 / 3], [0.0, 0.0]])))
    mask = select_reliable(l2_normalize(F), state, 0.0)
    assert mask.v.tolist() == [True, False, True, True]


def test_selection_disabled_and_fraction():
    assert select_all(7).v.all()
    assert selected_fraction(select_all(7)) == 1.0
    F, state = clustered(4)
    m = select_reliable(l2_normalize(F), state, 1.0)
    assert selected_fraction(m) == state.K / len(F)
    assert selected_fraction(m) == m.v.sum() / m.v.size


@pytest.mark.parametrize("seed", range(12))
def test_mask_minimises_constrained_surrogate(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(4, 13))
    F, state = clustered(seed, N=N, E=3, K=int(rng.integers(1, 4)))
    U = l2_normalize(F)
    lam = float(rng.choice(LAMBDAS))
    mask = select_reliable(U, state, lam)
    delta = (U * state.center_features[state.assignments]).sum(axis=1)
    value = float(np.sum(mask.v * (1 - delta)) - (1 - lam) * mask.v.sum())
    assert value == pytest.approx(constrained_surrogate_minimum(delta, state.assignments, state.K, lam),
                                  abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 1))
def test_monotone_in_lambda(seed, a, b):
    lo, hi = min(a, b), max(a, b)
    F, state = clustered(seed % 10_000, N=20, K=3)
    U = l2_normalize(F)
    m_lo, m_hi = select_reliable(U, state, lo), select_reliable(U, state, hi)
    assert not (m_hi.v & ~m_lo.v).any()
    validate_selection(m_hi, state.assignments, state.K)
