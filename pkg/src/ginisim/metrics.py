"""Concentration statistics on the empirical wealth ensemble.

Conventions are fixed package-wide and the inequality checks depend on
them:

* Gini uses the with-replacement pair convention, including i = j, so a
  single rich agent among N gives G = (N-1)/N rather than 1.
* Standard deviation is the population form (divisor N).
* Tail probability counts strict exceedance x > kappa*mean; ties at the
  threshold do not exceed.

Besides the point estimators, the module provides influence-function
standard errors and a fast multinomial bootstrap for the next-step CV^2
recursion.  Those feed the toleranced inequality gates: the recursion
bound is tight (an equality in expectation for exact-dispersion
kernels), so roughly half of all steps sit below it by pure sampling
noise and a zero-tolerance comparison would be meaningless.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import streams


def _checked(wealth) -> np.ndarray:
    x = np.asarray(wealth, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("need a flat vector of at least 2 wealth values")
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise ValueError("wealth values must be finite and nonnegative")
    return x


def gini(wealth) -> float:
    """Gini coefficient via the sorted-rank identity, O(N log N).

    Equals (1/(2 N^2 mu)) * sum_{i,j} |x_i - x_j|, pairs drawn with
    replacement.
    """
    x = _checked(wealth)
    mu = x.mean()
    if not mu > 0.0:
        raise ValueError("Gini undefined: mean wealth is zero")
    n = x.size
    xs = np.sort(x)
    ranks = np.arange(1, n + 1, dtype=np.float64)
    return float(np.sum((2.0 * ranks - n - 1.0) * xs) / (n * n * mu))


def gini_pairwise_oracle(wealth) -> float:
    """Direct O(N^2) double sum; reference for property tests only."""
    x = _checked(wealth)
    if x.size > 10_000:
        raise ValueError("pairwise oracle capped at N = 10^4")
    mu = x.mean()
    if not mu > 0.0:
        raise ValueError("Gini undefined: mean wealth is zero")
    diff = np.abs(x[:, None] - x[None, :]).sum()
    return float(diff / (2.0 * x.size**2 * mu))


def coefficient_of_variation(wealth) -> float:
    x = _checked(wealth)
    mu = x.mean()
    if not mu > 0.0:
        raise ValueError("CV undefined: mean wealth is zero")
    return float(x.std() / mu)


def tail_probability(wealth, kappa: float) -> float:
    """Fraction of agents with wealth strictly above kappa * mean."""
    x = _checked(wealth)
    if not kappa > 0.0:
        raise ValueError("kappa must be positive")
    mu = x.mean()
    if not mu > 0.0:
        raise ValueError("tail probability undefined: mean wealth is zero")
    return float(np.count_nonzero(x > kappa * mu)) / x.size


@dataclass(frozen=True)
class SnapshotMetrics:
    """Per-step summary row: everything the inequality layer consumes."""

    t: int
    n: int
    mu: float
    sigma: float
    cv: float
    gini: float
    tail_probs: dict[float, float]


def snapshot(wealth, t: int, kappas=()) -> SnapshotMetrics:
    x = _checked(wealth)
    mu = float(x.mean())
    if not mu > 0.0:
        raise ValueError("snapshot undefined: mean wealth is zero")
    sigma = float(x.std())
    return SnapshotMetrics(
        t=int(t),
        n=x.size,
        mu=mu,
        sigma=sigma,
        cv=sigma / mu,
        gini=gini(x),
        tail_probs={float(k): tail_probability(x, k) for k in kappas},
    )


# --- sampling-error machinery for the toleranced inequality gates ---


def cv_squared_influence(wealth) -> np.ndarray:
    """Influence function of CV^2 = E[x^2]/mu^2 - 1 (delta method).

    std(IF)/sqrt(N) is the asymptotic standard error of the plug-in CV^2.
    """
    x = _checked(wealth)
    mu = x.mean()
    m2 = np.mean(x * x)
    return (x * x - m2) / mu**2 - (2.0 * m2 / mu**3) * (x - mu)


def gini_influence(wealth) -> np.ndarray:
    """Influence function of the with-replacement Gini.

    Uses the sorted prefix-sum identity for u_i = sum_j |x_i - x_j|, so
    the whole thing is O(N log N).  std(IF)/sqrt(N) estimates SE(G), and
    differences of paired influences give the SE of a step's Gini change.
    """
    x = _checked(wealth)
    n = x.size
    mu = x.mean()
    order = np.argsort(x, kind="stable")
    xs = x[order]
    prefix = np.cumsum(xs)
    total = prefix[-1]
    idx = np.arange(n, dtype=np.float64)
    u_sorted = xs * (2.0 * idx + 2.0 - n) - 2.0 * prefix + total
    u = np.empty(n)
    u[order] = u_sorted
    mean_abs = u.mean() / n  # = 2 mu G
    g = mean_abs / (2.0 * mu)
    return (u / n - mean_abs) / mu - (g / mu) * (x - mu)


def _bootstrap_counts(n: int, n_boot: int, master_seed: int, sequence: int) -> np.ndarray:
    """Multinomial resampling counts, (n_boot, n), from the keyed streams."""
    out = np.empty((n_boot, n), dtype=np.float64)
    for b in range(n_boot):
        u = streams.probe_uniforms(master_seed, streams.TAG_PROBE, n, sequence * n_boot + b)
        idx = np.minimum((u * n).astype(np.int64), n - 1)
        out[b] = np.bincount(idx, minlength=n)
    return out


def cv_recursion_delta_se(wealth_prev, wealth_next, alpha: float, beta: float,
                          gamma_disp: float) -> float:
    """Delta-method SE of CV^2(next) - recursion bound(prev), paired by agent.

    Linearizes the bound in (CV^2, mu) of the previous population and
    differences the influence functions agent by agent.  Cheap O(N)
    companion to the bootstrap, suitable for per-step gating.
    """
    xp = _checked(wealth_prev)
    xn = _checked(wealth_next)
    if xp.size != xn.size:
        raise ValueError("paired populations must have equal size")
    mu = xp.mean()
    v = (xp.std() / mu) ** 2
    r2 = (gamma_disp / alpha) ** 2
    denom = 1.0 + beta / (alpha * mu)
    bound = ((1.0 + r2) * v + r2) / denom**2
    db_dv = (1.0 + r2) / denom**2
    db_dmu = 2.0 * beta * bound / (denom * alpha * mu**2)
    if_prev = db_dv * cv_squared_influence(xp) + db_dmu * (xp - mu)
    if_diff = cv_squared_influence(xn) - if_prev
    return float(if_diff.std(ddof=1) / np.sqrt(xp.size))


def cv_recursion_bootstrap_se(
    wealth_prev,
    wealth_next,
    bound_fn,
    n_boot: int = 64,
    master_seed: int = 0,
    sequence: int = 0,
) -> float:
    """Paired bootstrap SE of D = CV^2(next) - bound_fn(CV(prev), mu(prev)).

    Agents are resampled jointly in both populations, preserving the
    coupling between a wealth value and its own next-step draw.  Both
    statistics reduce to weighted first and second moments, so each
    replicate is two matrix products over the resampling counts.
    """
    xp = _checked(wealth_prev)
    xn = _checked(wealth_next)
    if xp.size != xn.size:
        raise ValueError("paired populations must have equal size")
    n = xp.size
    counts = _bootstrap_counts(n, n_boot, master_seed, sequence)
    cols = np.column_stack([xp, xp * xp, xn, xn * xn])
    sums = counts @ cols  # (n_boot, 4)
    mu_p = sums[:, 0] / n
    cv2_p = sums[:, 1] / (n * mu_p**2) - 1.0
    mu_n = sums[:, 2] / n
    cv2_n = sums[:, 3] / (n * mu_n**2) - 1.0
    d = cv2_n - bound_fn(np.sqrt(np.maximum(cv2_p, 0.0)), mu_p)
    return float(np.std(d, ddof=1))
