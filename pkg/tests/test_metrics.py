"""Inequality statistics against hand values and the O(N^2) oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ginisim import metrics
from ginisim.metrics import (
    coefficient_of_variation,
    gini,
    gini_pairwise_oracle,
    snapshot,
    tail_probability,
)


def test_gini_hand_values():
    assert gini([1, 1, 1, 1]) == 0.0
    assert gini([0, 0, 0, 1]) == pytest.approx(0.75, abs=1e-15)
    assert gini([1, 2, 3, 4]) == pytest.approx(0.25, abs=1e-15)


def test_oracle_hand_values():
    assert gini_pairwise_oracle([0, 1]) == pytest.approx(0.5, abs=1e-15)
    assert gini_pairwise_oracle([1, 3]) == pytest.approx(0.25, abs=1e-15)
    assert gini_pairwise_oracle([2, 2, 2]) == 0.0


def test_gini_matches_pairwise_oracle_on_random_vectors():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = rng.integers(2, 65)
        x = rng.uniform(0.0, 10.0, size=n)
        assert abs(gini(x) - gini_pairwise_oracle(x)) < 1e-12


def test_gini_maximum_at_finite_n():
    # one agent holding everything: (N-1)/N under the with-replacement
    # pair convention, not 1
    x = np.zeros(10)
    x[3] = 5.0
    assert gini(x) == pytest.approx(0.9, abs=1e-15)


def test_cv_hand_values():
    assert coefficient_of_variation([1, 3]) == pytest.approx(0.5, abs=1e-15)
    assert coefficient_of_variation([0, 0, 0, 1]) == pytest.approx(
        np.sqrt(3.0), rel=1e-15)
    assert coefficient_of_variation([2, 2, 2]) == 0.0


def test_tail_probability_hand_values():
    assert tail_probability([1, 2, 3, 4], 1.0) == 0.5
    assert tail_probability([1, 2, 3, 4], 1e9) == 0.0
    assert tail_probability([1, 1, 1, 1], 0.5) == 1.0


def test_tail_threshold_is_strict():
    # ties at kappa*mu do not count as exceeding
    x = np.array([1.0, 1.0, 2.0])  # mu = 4/3, kappa=1.5 -> threshold 2.0
    assert tail_probability(x, 1.5) == 0.0


def test_tail_probability_requires_positive_kappa():
    with pytest.raises(ValueError):
        tail_probability([1.0, 2.0], 0.0)


@given(st.floats(min_value=1e-6, max_value=1e6))
@settings(max_examples=200, deadline=None)
def test_scale_invariance(c):
    x = np.array([0.3, 1.7, 2.0, 5.5, 0.0, 9.1])
    assert gini(c * x) == pytest.approx(gini(x), abs=1e-12)
    assert coefficient_of_variation(c * x) == pytest.approx(
        coefficient_of_variation(x), abs=1e-12)


def test_scale_invariance_exact_for_binary_scale():
    x = np.array([0.3, 1.7, 2.0, 5.5, 9.1])
    assert gini(2.0 * x) == gini(x)
    assert gini(0.25 * x) == gini(x)


@given(st.floats(min_value=1e-3, max_value=1e3))
@settings(max_examples=200, deadline=None)
def test_translation_strictly_decreases_gini(c):
    x = np.array([0.5, 1.0, 4.0, 7.5])
    assert gini(x + c) < gini(x)


@given(st.lists(st.floats(min_value=0.0, max_value=10.0), min_size=2, max_size=64))
@settings(max_examples=300, deadline=None)
def test_gini_range_property(values):
    x = np.asarray(values)
    if x.sum() == 0.0:
        return  # all-zero wealth has no mean to normalize by
    g = gini(x)
    n = x.size
    assert -1e-15 <= g <= (n - 1) / n + 1e-15


def test_checked_input_validation():
    with pytest.raises(ValueError, match="at least 2"):
        gini([1.0])
    with pytest.raises(ValueError):
        gini([1.0, -2.0])
    with pytest.raises(ValueError):
        gini([1.0, np.nan])
    with pytest.raises(ValueError):
        coefficient_of_variation(np.array([[1.0, 2.0], [3.0, 4.0]]))


def test_snapshot_fields_and_conventions():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    snap = snapshot(x, t=7, kappas=(0.1, 0.25, 1.0))
    assert snap.t == 7
    assert snap.n == 4
    assert snap.mu == pytest.approx(2.5)
    # population (divisor N) standard deviation
    assert snap.sigma == pytest.approx(np.std(x), rel=1e-15)
    assert snap.cv == pytest.approx(np.std(x) / 2.5, rel=1e-15)
    assert snap.gini == pytest.approx(0.25, abs=1e-15)
    assert snap.tail_probs[1.0] == 0.5
    # tail probability nonincreasing in kappa
    ks = sorted(snap.tail_probs)
    ps = [snap.tail_probs[k] for k in ks]
    assert all(a >= b for a, b in zip(ps, ps[1:]))


def test_influence_functions_are_centered():
    rng = np.random.default_rng(3)
    x = rng.lognormal(0.0, 1.0, size=500)
    assert abs(metrics.cv_squared_influence(x).mean()) < 1e-10
    assert abs(metrics.gini_influence(x).mean()) < 1e-10


def test_delta_and_bootstrap_se_agree_in_order_of_magnitude():
    rng = np.random.default_rng(5)
    n = 4000
    prev = rng.lognormal(0.0, 0.5, size=n)
    mult = rng.lognormal(-0.02, 0.2, size=n)
    nxt = prev * mult

    def bound_fn(cv, mu):
        return ((1.0 + 0.04) * cv**2 + 0.04) / (1.0 + 0.5 / mu) ** 2

    se_d = metrics.cv_recursion_delta_se(prev, nxt, 1.0, 0.5, 0.2)
    se_b = metrics.cv_recursion_bootstrap_se(prev, nxt, bound_fn, n_boot=128,
                                             master_seed=9)
    assert se_d > 0.0 and se_b > 0.0
    assert 0.3 < se_d / se_b < 3.0


def test_bootstrap_se_deterministic_given_seed():
    rng = np.random.default_rng(8)
    prev = rng.uniform(0.5, 2.0, size=300)
    nxt = prev * 1.01

    def bound_fn(cv, mu):
        return cv**2

    a = metrics.cv_recursion_bootstrap_se(prev, nxt, bound_fn, n_boot=32,
                                          master_seed=4, sequence=2)
    b = metrics.cv_recursion_bootstrap_se(prev, nxt, bound_fn, n_boot=32,
                                          master_seed=4, sequence=2)
    assert a == b


def test_paired_se_requires_equal_sizes():
    with pytest.raises(ValueError, match="equal size"):
        metrics.cv_recursion_delta_se(np.ones(10), np.ones(11), 1.0, 0.0, 0.1)
