"""Population ensemble and its one-step evolution.

The wealth distribution is represented as a finite ensemble of agents
(a particle method): statistics are exact on the ensemble and each
agent transitions independently given its current wealth, so a step is
embarrassingly parallel.

Growth policies come in three modes:

* Linear: conditional mean alpha_t * x + beta_t from explicit schedules
  (defaulting to the kernel's own alpha, beta).
* Proportional: beta_t = c * mu_t evaluated on the current empirical
  mean; the feedback form of the transfer.
* General: conditional mean growth_factor_t * x + redistribution_t(x),
  the redistribution recentred to empirical mean zero each step.

Reproducibility contract: every agent draw is keyed by
(master_seed, step, agent block), see `streams`.  The same seed gives
bit-identical trajectories at any thread count.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import streams
from .kernels import (
    DETERMINISTIC,
    LOGNORMAL,
    KernelSpec,
    transition_from_uniforms,
    unit_mean_noise,
)

LINEAR = "linear"
PROPORTIONAL = "proportional"
GENERAL = "general"


class PopulationState:
    """Immutable wealth vector plus its time index."""

    __slots__ = ("wealth", "t")

    def __init__(self, wealth, t: int):
        w = np.array(wealth, dtype=np.float64)
        if w.ndim != 1 or w.size < 2:
            raise ValueError("population needs at least 2 agents")
        if not np.all(np.isfinite(w)):
            raise ValueError("population contains non-finite wealth")
        if np.any(w < 0):
            raise ValueError("population contains negative wealth")
        if t < 0:
            raise ValueError("time index must be nonnegative")
        w.flags.writeable = False
        object.__setattr__(self, "wealth", w)
        object.__setattr__(self, "t", int(t))

    def __setattr__(self, name, value):
        raise AttributeError("PopulationState is immutable")

    @property
    def n(self) -> int:
        return self.wealth.size


def _as_schedule(value) -> Callable[[int], float] | None:
    if value is None or callable(value):
        return value
    v = float(value)
    return lambda t: v


@dataclass(frozen=True)
class GrowthPolicy:
    """How the conditional mean of the next step depends on current wealth."""

    mode: str
    alpha_schedule: Callable[[int], float] | None = None
    beta_schedule: Callable[[int], float] | None = None
    salary_fraction: float | None = None
    growth_schedule: Callable[[int], float] | None = None
    redistribution: Callable[[int, np.ndarray, float], np.ndarray] | None = None

    @classmethod
    def linear(cls, alpha=None, beta=None) -> "GrowthPolicy":
        """Explicit schedules; None falls back to the kernel's own value."""
        return cls(LINEAR, _as_schedule(alpha), _as_schedule(beta))

    @classmethod
    def proportional(cls, salary_fraction: float, alpha=None) -> "GrowthPolicy":
        """Transfer proportional to the running empirical mean."""
        c = float(salary_fraction)
        if c < 0.0:
            raise ValueError("salary fraction must be >= 0")
        return cls(PROPORTIONAL, _as_schedule(alpha), None, salary_fraction=c)

    @classmethod
    def general(cls, growth_factor, redistribution) -> "GrowthPolicy":
        """Arbitrary mean split; the redistribution is recentred per step."""
        return cls(GENERAL, growth_schedule=_as_schedule(growth_factor),
                   redistribution=redistribution)

    def linear_coefficients(self, t: int, mu: float, kernel: KernelSpec) -> tuple[float, float]:
        """(alpha_t, beta_t) as they will act on the population at time t."""
        if self.mode == GENERAL:
            raise ValueError("general mode has no (alpha, beta) pair")
        alpha = kernel.alpha if self.alpha_schedule is None else float(self.alpha_schedule(t))
        if self.mode == PROPORTIONAL:
            beta = self.salary_fraction * mu
        else:
            beta = kernel.beta if self.beta_schedule is None else float(self.beta_schedule(t))
        if not alpha >= 1.0:
            raise ValueError(f"alpha schedule returned {alpha} < 1 at t={t}")
        if beta < 0.0:
            raise ValueError(f"beta schedule returned {beta} < 0 at t={t}")
        return alpha, beta


def mean_evolution(mu: float, alpha: float, beta: float) -> float:
    """Theory recursion for the ensemble mean: alpha*mu + beta."""
    if mu < 0.0:
        raise ValueError("mu must be nonnegative")
    return alpha * mu + beta


def _general_step(pop: PopulationState, kernel: KernelSpec, policy: GrowthPolicy,
                  master_seed: int, executor) -> np.ndarray:
    x = pop.wealth
    mu = float(x.mean())
    g = float(policy.growth_schedule(pop.t))
    z = np.asarray(policy.redistribution(pop.t, x, mu), dtype=np.float64)
    if z.shape != x.shape:
        raise ValueError("redistribution must return one value per agent")
    z = z - z.mean()  # recentring: empirical mean of the redistribution is 0
    means = g * x + z
    if np.any(means < 0.0):
        i = int(np.argmin(means))
        raise ValueError(
            f"general-mode conditional mean is negative for agent {i}: "
            f"{means[i]} (wealth stays nonnegative)"
        )
    if kernel.family == DETERMINISTIC:
        return means
    sd = kernel.gamma_disp * x
    bad = (means == 0.0) & (sd > 0.0)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ValueError(
            f"agent {i} has conditional mean 0 but dispersion {sd[i]}; "
            "nonnegative noise cannot realize that"
        )
    rel = np.divide(sd, means, out=np.zeros_like(sd), where=means > 0.0)
    u = streams.indexed_uniforms(master_seed, streams.TAG_STEP, pop.t, x.size, executor)
    w = np.ones_like(x)
    pos = rel > 0.0
    w[pos] = unit_mean_noise(kernel.family, rel[pos], u[pos])
    return means * w


def step(pop: PopulationState, kernel: KernelSpec, policy: GrowthPolicy,
         master_seed: int, executor: ThreadPoolExecutor | None = None) -> PopulationState:
    """Advance the whole ensemble one time step.

    Agent i's draw depends only on (master_seed, pop.t, i), so any
    partitioning across threads gives identical output.
    """
    if policy.mode == GENERAL:
        new = _general_step(pop, kernel, policy, master_seed, executor)
        return PopulationState(new, pop.t + 1)

    alpha, beta = policy.linear_coefficients(pop.t, float(pop.wealth.mean()), kernel)
    k_t = replace(kernel, alpha=alpha, beta=beta)
    if kernel.family == DETERMINISTIC:
        new = alpha * pop.wealth + beta
    else:
        u = streams.indexed_uniforms(master_seed, streams.TAG_STEP, pop.t,
                                     pop.n, executor)
        new = transition_from_uniforms(k_t, pop.wealth, u)
    return PopulationState(new, pop.t + 1)


def simulate(pop: PopulationState, kernel: KernelSpec, policy: GrowthPolicy,
             steps: int, master_seed: int,
             executor: ThreadPoolExecutor | None = None) -> Iterator[PopulationState]:
    """Yield the initial state and each of the `steps` successor states."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    yield pop
    for _ in range(steps):
        pop = step(pop, kernel, policy, master_seed, executor)
        yield pop


# --- initial conditions -------------------------------------------------

def initial_point(n: int, value: float = 1.0) -> PopulationState:
    if value < 0.0:
        raise ValueError("initial wealth must be nonnegative")
    return PopulationState(np.full(n, float(value)), 0)


def initial_uniform(n: int, low: float, high: float, master_seed: int) -> PopulationState:
    if not 0.0 <= low < high:
        raise ValueError("need 0 <= low < high for a uniform initial condition")
    u = streams.indexed_uniforms(master_seed, streams.TAG_INIT, 0, n)
    return PopulationState(low + (high - low) * u, 0)


def initial_lognormal(n: int, mean: float, cv: float, master_seed: int) -> PopulationState:
    """Lognormal ensemble with the given mean and coefficient of variation."""
    if not mean > 0.0 or not cv > 0.0:
        raise ValueError("lognormal initial condition needs mean > 0 and cv > 0")
    u = streams.indexed_uniforms(master_seed, streams.TAG_INIT, 0, n)
    w = unit_mean_noise(LOGNORMAL, cv, u)
    return PopulationState(mean * w, 0)


def make_initial(n: int, kind: str, master_seed: int, **params) -> PopulationState:
    if n < 2:
        raise ValueError("population needs at least 2 agents")
    if kind == "point":
        return initial_point(n, params.get("value", 1.0))
    if kind == "uniform":
        return initial_uniform(n, params["low"], params["high"], master_seed)
    if kind == "lognormal":
        return initial_lognormal(n, params.get("mean", 1.0), params["cv"], master_seed)
    raise ValueError(f"unknown initial condition kind {kind!r}")


# --- full instrumented run ----------------------------------------------

def run(config, master_seed: int | None = None, threads: int = 1):
    """Generator of (PopulationState, SnapshotMetrics, [BoundRecord]) rows.

    Emits the initial snapshot first (recursion rows nan there), then one
    row per step.  Rows appear incrementally so callers can stream them
    to disk and keep partial output on failure.
    """
    from . import metrics
    from .bounds import step_bound_report

    seed = config.master_seed if master_seed is None else master_seed
    kernel = config.kernel
    policy = config.build_policy()
    pop0 = config.build_initial(seed)
    params = config.bound_params()
    # the report layer looks its kappa up in the snapshot, so force it in
    kappas = tuple(sorted(set(config.kappas) | {params.kappa}))

    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        prev_snap = None
        prev_ab = (math.nan, math.nan)
        for pop in simulate(pop0, kernel, policy, config.steps, seed, executor):
            snap = metrics.snapshot(pop.wealth, pop.t, kappas)
            now_ab = policy.linear_coefficients(pop.t, snap.mu, kernel)
            records = step_bound_report(
                prev_snap, snap, prev_ab[0], prev_ab[1], now_ab[0], now_ab[1],
                kernel.gamma_disp, params,
            )
            yield pop, snap, records
            prev_snap, prev_ab = snap, now_ab
    finally:
        if executor is not None:
            executor.shutdown(wait=False)
