"""Ensemble evolution: exactness, reproducibility, mode equivalences."""

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from ginisim.config import load_config
from ginisim.dynamics import (
    GrowthPolicy,
    PopulationState,
    initial_lognormal,
    initial_point,
    initial_uniform,
    make_initial,
    mean_evolution,
    run,
    simulate,
    step,
)
from ginisim.kernels import DETERMINISTIC, LOGNORMAL, KernelSpec

LOGN = KernelSpec(family=LOGNORMAL, alpha=1.02, beta=0.0, gamma_disp=0.2)


def det_kernel(alpha=1.0, beta=0.0):
    return KernelSpec(family=DETERMINISTIC, alpha=alpha, beta=beta, gamma_disp=0.0)


def test_population_state_immutable():
    pop = PopulationState([1.0, 2.0], 0)
    with pytest.raises(AttributeError, match="immutable"):
        pop.t = 3
    with pytest.raises(ValueError):
        pop.wealth[0] = 5.0  # numpy read-only flag


def test_population_state_validation():
    with pytest.raises(ValueError, match="at least 2"):
        PopulationState([1.0], 0)
    with pytest.raises(ValueError, match="non-finite"):
        PopulationState([1.0, np.inf], 0)
    with pytest.raises(ValueError, match="negative"):
        PopulationState([1.0, -0.5], 0)
    with pytest.raises(ValueError, match="nonnegative"):
        PopulationState([1.0, 2.0], -1)


def test_deterministic_step_hand_values():
    pop = PopulationState([1.0, 2.0, 3.0], 0)
    out = step(pop, det_kernel(alpha=2.0), GrowthPolicy.linear(), master_seed=0)
    np.testing.assert_array_equal(out.wealth, [2.0, 4.0, 6.0])
    assert out.t == 1

    broke = PopulationState([0.0, 0.0], 0)
    out = step(broke, det_kernel(alpha=1.0, beta=1.0), GrowthPolicy.linear(), 0)
    np.testing.assert_array_equal(out.wealth, [1.0, 1.0])


def test_mean_evolution_hand_values():
    assert mean_evolution(10.0, 1.2, 0.5) == 12.5
    assert mean_evolution(7.0, 1.0, 0.0) == 7.0
    assert mean_evolution(0.0, 1.5, 0.25) == 0.25
    with pytest.raises(ValueError):
        mean_evolution(-1.0, 1.0, 0.0)


def test_one_step_mean_tracks_mean_evolution():
    n = 100_000
    pop = initial_point(n, 1.0)
    out = step(pop, LOGN, GrowthPolicy.linear(), master_seed=5)
    se = LOGN.gamma_disp * 1.0 / math.sqrt(n)  # SD of x*L is Gamma*x here
    assert abs(out.wealth.mean() - mean_evolution(1.0, 1.02, 0.0)) < 5.0 * se


def test_one_step_mean_from_spread_population():
    rng_pop = initial_uniform(50_000, 0.5, 3.5, master_seed=2)
    mu = rng_pop.wealth.mean()
    out = step(rng_pop, LOGN, GrowthPolicy.linear(), master_seed=9)
    se = LOGN.gamma_disp * math.sqrt(np.mean(rng_pop.wealth**2) / rng_pop.n)
    assert abs(out.wealth.mean() - mean_evolution(mu, 1.02, 0.0)) < 5.0 * se


def test_simulate_zero_steps_yields_initial_only():
    pop = initial_point(4, 2.0)
    states = list(simulate(pop, LOGN, GrowthPolicy.linear(), 0, master_seed=0))
    assert len(states) == 1
    assert states[0] is pop
    with pytest.raises(ValueError):
        list(simulate(pop, LOGN, GrowthPolicy.linear(), -1, 0))


def test_identity_kernel_is_a_fixed_point():
    pop = PopulationState([0.5, 1.0, 2.0], 0)
    states = list(simulate(pop, det_kernel(), GrowthPolicy.linear(), 100, 0))
    assert len(states) == 101
    for s in states:
        np.testing.assert_array_equal(s.wealth, pop.wealth)


def test_deterministic_growth_keeps_cv_constant():
    # multiplicative-only deterministic growth rescales everything
    from ginisim.metrics import coefficient_of_variation

    pop = PopulationState([1.0, 2.0, 7.0], 0)
    cv0 = coefficient_of_variation(pop.wealth)
    for s in simulate(pop, det_kernel(alpha=1.07), GrowthPolicy.linear(), 50, 0):
        assert coefficient_of_variation(s.wealth) == pytest.approx(cv0, rel=1e-12)


def test_thread_count_does_not_change_results():
    pop = initial_uniform(3 * 4096 + 17, 0.1, 2.0, master_seed=1)
    serial = [s.wealth for s in simulate(pop, LOGN, GrowthPolicy.linear(), 5, 77)]
    with ThreadPoolExecutor(max_workers=4) as ex:
        threaded = [s.wealth
                    for s in simulate(pop, LOGN, GrowthPolicy.linear(), 5, 77,
                                      executor=ex)]
    for a, b in zip(serial, threaded):
        np.testing.assert_array_equal(a, b)


def test_wealth_stays_nonnegative():
    cfgs = [
        (LOGN, GrowthPolicy.linear()),
        (KernelSpec(family="gamma", alpha=1.05, beta=0.3, gamma_disp=0.8),
         GrowthPolicy.linear()),
        (LOGN, GrowthPolicy.proportional(0.05)),
    ]
    for kernel, policy in cfgs:
        for s in simulate(initial_point(500, 1.0), kernel, policy, 50, 3):
            assert s.wealth.min() >= 0.0


def test_linear_coefficient_schedules_and_validation():
    pol = GrowthPolicy.linear(alpha=lambda t: 1.0 + 0.01 * t, beta=2.0)
    assert pol.linear_coefficients(3, 10.0, LOGN) == (1.03, 2.0)
    assert pol.linear_coefficients(0, 10.0, LOGN) == (1.0, 2.0)

    bad_alpha = GrowthPolicy.linear(alpha=0.9)
    with pytest.raises(ValueError, match="alpha schedule returned 0.9 < 1 at t=0"):
        step(initial_point(2, 1.0), det_kernel(), bad_alpha, 0)
    bad_beta = GrowthPolicy.linear(beta=-1.0)
    with pytest.raises(ValueError, match="beta schedule returned"):
        step(initial_point(2, 1.0), det_kernel(), bad_beta, 0)


def test_proportional_mode_feeds_back_on_empirical_mean():
    pol = GrowthPolicy.proportional(0.1)
    alpha, beta = pol.linear_coefficients(0, 20.0, LOGN)
    assert alpha == 1.02
    assert beta == 2.0
    with pytest.raises(ValueError):
        GrowthPolicy.proportional(-0.01)


def test_general_mode_has_no_linear_pair():
    pol = GrowthPolicy.general(1.02, lambda t, x, mu: np.zeros_like(x))
    with pytest.raises(ValueError, match="no \\(alpha, beta\\) pair"):
        pol.linear_coefficients(0, 1.0, LOGN)


def test_general_mode_reproduces_linear_on_deterministic():
    # growth g = alpha + beta/mu_t with redistribution beta*(1 - x/mu_t)
    # has the same conditional means as the linear (alpha, beta) pair
    alpha, beta = 1.03, 0.4
    k = det_kernel(alpha=alpha, beta=beta)
    pop0 = PopulationState([1.0, 2.0, 6.0], 0)
    linear_states = list(simulate(pop0, k, GrowthPolicy.linear(), 5, 0))
    mus = [float(s.wealth.mean()) for s in linear_states]

    pol = GrowthPolicy.general(
        lambda t: alpha + beta / mus[t],
        lambda t, x, mu: beta * (1.0 - x / mu),
    )
    general_states = list(simulate(pop0, k, pol, 5, 0))
    for ls, gs in zip(linear_states, general_states):
        np.testing.assert_allclose(gs.wealth, ls.wealth, rtol=1e-12)


def test_general_mode_rejects_negative_conditional_mean():
    pol = GrowthPolicy.general(1.0, lambda t, x, mu: -3.0 * x)
    with pytest.raises(ValueError, match="negative for agent 1"):
        step(PopulationState([1.0, 5.0], 0), det_kernel(), pol, 0)


def test_general_mode_rejects_zero_mean_with_dispersion():
    # means = -x + 2*mu hits exactly 0 for the richest agent
    k = KernelSpec(family=LOGNORMAL, alpha=1.0, beta=0.0, gamma_disp=1.0)
    pol = GrowthPolicy.general(1.0, lambda t, x, mu: -2.0 * x)
    with pytest.raises(ValueError, match="agent 2 has conditional mean 0"):
        step(PopulationState([1.0, 2.0, 6.0], 0), k, pol, 0)


def test_general_mode_redistribution_shape_checked():
    pol = GrowthPolicy.general(1.0, lambda t, x, mu: np.zeros(3))
    with pytest.raises(ValueError, match="one value per agent"):
        step(PopulationState([1.0, 2.0], 0), det_kernel(), pol, 0)


def test_initial_conditions():
    pt = initial_point(5, 2.5)
    np.testing.assert_array_equal(pt.wealth, np.full(5, 2.5))
    assert pt.t == 0

    uni = initial_uniform(10_000, 1.0, 3.0, master_seed=4)
    assert uni.wealth.min() >= 1.0 and uni.wealth.max() <= 3.0
    assert abs(uni.wealth.mean() - 2.0) < 5.0 * (2.0 / math.sqrt(12e4))
    np.testing.assert_array_equal(
        uni.wealth, initial_uniform(10_000, 1.0, 3.0, master_seed=4).wealth)

    n = 200_000
    logn = initial_lognormal(n, mean=2.0, cv=0.7, master_seed=6)
    assert abs(logn.wealth.mean() - 2.0) < 5.0 * 2.0 * 0.7 / math.sqrt(n)
    sample_cv = logn.wealth.std() / logn.wealth.mean()
    assert sample_cv == pytest.approx(0.7, rel=0.02)


def test_initial_condition_validation():
    with pytest.raises(ValueError):
        initial_point(5, -1.0)
    with pytest.raises(ValueError):
        initial_uniform(5, 2.0, 1.0, 0)
    with pytest.raises(ValueError):
        initial_lognormal(5, 0.0, 1.0, 0)
    with pytest.raises(ValueError, match="unknown initial condition"):
        make_initial(5, "cauchy", 0)
    with pytest.raises(ValueError, match="at least 2"):
        make_initial(1, "point", 0)


def test_run_emits_initial_row_and_forces_report_kappa():
    cfg = load_config({
        "kernel": {"family": "lognormal", "alpha": 1.02, "beta": 0.0,
                   "gamma_disp": 0.2},
        "population": {"n_agents": 100, "steps": 7},
        "master_seed": 3,
        "bounds": {"kappa_grid": [0.1], "kappa": 0.3},
    })
    rows = list(run(cfg))
    assert len(rows) == 8
    pop0, snap0, recs0 = rows[0]
    assert pop0.t == 0 and snap0.t == 0
    assert set(snap0.tail_probs) == {0.1, 0.3}
    by_name = {r.name: r for r in recs0}
    assert math.isnan(by_name["cv_growth"].lhs)  # no previous step yet
    pop1, snap1, recs1 = rows[1]
    assert not math.isnan({r.name: r for r in recs1}["cv_growth"].lhs)
    assert snap1.t == 1
