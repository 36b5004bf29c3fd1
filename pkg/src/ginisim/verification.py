"""Numerical verification of the pair-integral bound chain.

The concentration argument rests on integral machinery: the restricted
pair integral F(x,y) = E[(Y'-X')^+] over independent transitions started
at x and y, its diagonal lower bound F(x,x) >= Gamma*x/2, a stripe-pair
functional over near-diagonal pairs, the extremal density h(y) = a/y^2
minimizing that functional, and the propagation of the log-derivative
bound from the kernel to the next-step population density.  Each gets a
direct numerical check here; nothing is taken from the derivations on
trust.

Quadrature policy: 1-D adaptive integration with the inner integral of
F done in closed form (upper partial moments of the noise law), domains
truncated where the integrand's law puts less than ~1e-13 of its mass.
Every reported number carries an error estimate or a tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy import special as sp

from . import streams
from .bounds import BoundParams
from .dynamics import PopulationState
from .kernels import (
    LOGNORMAL,
    KernelSpec,
    NoDensityError,
    _probe_array,
    unit_mean_noise,
)
from .metrics import tail_probability
from .streams import Stream

_SQRT2 = math.sqrt(2.0)


class QuadratureError(RuntimeError):
    """Raised when adaptive quadrature cannot reach the requested accuracy."""


class NonNormalizedError(ValueError):
    """Raised when a density handed to the functional does not integrate to 1."""


def _ndtr(z: float) -> float:
    return 0.5 * math.erfc(-z / _SQRT2)


# --- restricted pair integral -------------------------------------------


def pair_split_integral(kernel: KernelSpec, x: float, y: float) -> float:
    """F(x, y) = E[(Y' - X')^+] for independent transitions from x and y.

    Computed as a single adaptive integral over the first factor's noise,
    with the inner integral reduced to the noise law's upper partial
    moments in closed form.  The additive transfer cancels from Y' - X',
    so F does not depend on beta.

    Absolute error target: 1e-7 * (alpha*x + beta).
    """
    if not kernel.has_density:
        raise NoDensityError("deterministic kernel has no density; F undefined")
    if not (x > 0.0 and y > 0.0):
        raise ValueError("pair integral requires x, y > 0")

    if kernel.family == LOGNORMAL:
        m, s = kernel.lognormal_params()
        alpha = kernel.alpha

        def partial_mean(c: float) -> float:  # E[V; V > c]
            return alpha * _ndtr((m + s * s - math.log(c)) / s)

        def upper_tail(c: float) -> float:  # P(V > c)
            return _ndtr((m - math.log(c)) / s)

        t_lo, t_hi = m - 8.0 * s, m + 8.0 * s

        def weighted_noise(t: float) -> float:  # u * f_U(u) du -> ... dt at t = ln u
            z = (t - m) / s
            return math.exp(-0.5 * z * z) / (s * math.sqrt(2.0 * math.pi))

    else:
        k, theta = kernel.gamma_params()
        log_norm = sp.gammaln(k) + k * math.log(theta)

        def partial_mean(c: float) -> float:
            return k * theta * sp.gammaincc(k + 1.0, c / theta)

        def upper_tail(c: float) -> float:
            return sp.gammaincc(k, c / theta)

        t_lo = math.log(sp.gammaincinv(k, 1e-14) * theta)
        t_hi = math.log(sp.gammainccinv(k, 1e-14) * theta)

        def weighted_noise(t: float) -> float:
            return math.exp(k * t - math.exp(t) / theta - log_norm)

    def integrand(t: float) -> float:
        u = math.exp(t)
        c = x * u / y
        return weighted_noise(t) * (y * partial_mean(c) - x * u * upper_tail(c))

    scale = kernel.alpha * max(x, y)
    value, err = integrate.quad(
        integrand, t_lo, t_hi, epsabs=1e-12 * scale, epsrel=1e-10, limit=300
    )
    target = 1e-7 * (kernel.alpha * x + kernel.beta)
    if err > target:
        raise QuadratureError(
            f"pair integral error estimate {err:.3e} exceeds target {target:.3e}"
        )
    return float(value)


def pair_split_monte_carlo(kernel: KernelSpec, x: float, y: float, n_pairs: int,
                           stream: Stream) -> tuple[float, float]:
    """Monte Carlo oracle for the pair integral: (estimate, standard error)."""
    from .kernels import sample_transition

    xs = np.asarray(sample_transition(kernel, x, stream, size=n_pairs))
    ys = np.asarray(sample_transition(kernel, y, stream, size=n_pairs))
    gap = np.maximum(ys - xs, 0.0)
    return float(gap.mean()), float(gap.std(ddof=1) / math.sqrt(n_pairs))


# --- diagonal bound and calibration -------------------------------------


@dataclass(frozen=True)
class DiagonalRecord:
    x: float
    f_diag: float
    slack_vs_mean_scaled: float  # F(x,x) - Gamma*(alpha*x+beta)/2
    slack_vs_x: float            # F(x,x) - Gamma*x/2


@dataclass(frozen=True)
class DiagonalBoundReport:
    gamma_claimed: float
    quad_tol: float
    records: list[DiagonalRecord]

    @property
    def satisfied(self) -> bool:
        return all(
            r.slack_vs_mean_scaled >= -self.quad_tol and r.slack_vs_x >= -self.quad_tol
            for r in self.records
        )


def diagonal_bound_check(kernel: KernelSpec, x_grid, gamma_claimed: float,
                         quad_tol: float = 1e-6) -> DiagonalBoundReport:
    """Check F(x,x) >= Gamma*(alpha*x+beta)/2 and >= Gamma*x/2 on a grid.

    ``gamma_claimed`` is the inverse log-derivative constant the kernel
    claims; calibrate it first (see calibrate_log_derivative_bound) if
    you have no external claim.
    """
    records = []
    for x in x_grid:
        x = float(x)
        f = pair_split_integral(kernel, x, x)
        mean_scaled = gamma_claimed * (kernel.alpha * x + kernel.beta) / 2.0
        records.append(DiagonalRecord(
            x=x,
            f_diag=f,
            slack_vs_mean_scaled=f - mean_scaled,
            slack_vs_x=f - gamma_claimed * x / 2.0,
        ))
    return DiagonalBoundReport(gamma_claimed, quad_tol, records)


@dataclass(frozen=True)
class CalibrationResult:
    """Measured log-derivative bounds at a target high-probability mass.

    The input and output constants usually differ; the reciprocal of the
    larger one is the conservative inverse constant for the bound chain.
    Both are reported side by side rather than silently merged.
    """

    delta_logx: float
    delta_logxp: float
    target_mass: float
    mass_within_logx: float
    mass_within_logxp: float

    @property
    def gamma_inv(self) -> float:
        return 1.0 / max(self.delta_logx, self.delta_logxp)


def calibrate_log_derivative_bound(
    kernel: KernelSpec,
    x: float = 1.0,
    target_mass: float = 0.99,
    n_samples: int = 20000,
    master_seed: int = 0,
) -> CalibrationResult:
    """Measure the claimed log-derivative bounds as sample quantiles.

    Draws transitions, probes |d log f / d log (x or x')| at each, and
    returns the target_mass quantile of each probe's magnitude, so that
    high_probability_mass(kernel, x, bound) ~= target_mass by
    construction.
    """
    from .kernels import high_probability_mass, sample_transition

    stream = Stream(master_seed, streams.TAG_PROBE)
    xp = np.asarray(sample_transition(kernel, x, stream, size=n_samples))
    out = {}
    for which in ("input", "output"):
        probe = _probe_array(kernel, x, xp, which, 1e-5)
        probe = probe[np.isfinite(probe)]
        if probe.size < n_samples // 2:
            raise ValueError("too many undefined probes; cannot calibrate")
        out[which] = float(np.quantile(np.abs(probe), target_mass))
    mass_in = high_probability_mass(kernel, x, out["input"], which="input",
                                    n_samples=n_samples,
                                    stream=Stream(master_seed + 1, streams.TAG_PROBE))
    mass_out = high_probability_mass(kernel, x, out["output"], which="output",
                                     n_samples=n_samples,
                                     stream=Stream(master_seed + 2, streams.TAG_PROBE))
    return CalibrationResult(
        delta_logx=out["input"],
        delta_logxp=out["output"],
        target_mass=target_mass,
        mass_within_logx=mass_in.mass,
        mass_within_logxp=mass_out.mass,
    )


# --- stripe functional and extremal density ------------------------------


@dataclass(frozen=True)
class StripeRegion:
    """Near-diagonal stripe |x - y| < delta*x above the tail threshold."""

    kappa: float
    delta: float

    def __post_init__(self) -> None:
        if not 0.0 < self.kappa < 0.5:
            raise ValueError("kappa must be in (0, 1/2)")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")

    def contains(self, x, y, mu: float):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        lo = self.kappa * mu
        return (np.abs(x - y) < self.delta * x) & (x > lo) & (y > lo)


class DensityOnRay:
    """Probability density on (a, infinity), closed-form or gridded.

    ``upper`` truncates quadrature; for closed forms pick it so the
    neglected tail mass is ~1e-10.  ``extend=True`` evaluates a closed
    form below a as well (the cutoff-ignored variant of the functional);
    grid densities cannot be extended.
    """

    def __init__(self, a: float, pdf_fn=None, grid=None, upper: float | None = None,
                 label: str = "density"):
        if not a > 0.0:
            raise ValueError("lower endpoint a must be positive")
        if (pdf_fn is None) == (grid is None):
            raise ValueError("provide exactly one of pdf_fn or grid")
        self.a = float(a)
        self.pdf_fn = pdf_fn
        self.label = label
        if grid is not None:
            pts = np.asarray(grid[0], dtype=np.float64)
            vals = np.asarray(grid[1], dtype=np.float64)
            if pts.ndim != 1 or pts.shape != vals.shape or pts.size < 8:
                raise ValueError("grid needs matching 1-D arrays, at least 8 points")
            if np.any(np.diff(pts) <= 0.0) or pts[0] < a:
                raise ValueError("grid points must increase and start at or above a")
            if np.any(vals < 0.0):
                raise ValueError("grid density must be nonnegative")
            self.grid = (pts, vals)
            self.upper = float(pts[-1])
        else:
            self.grid = None
            if upper is None:
                raise ValueError("closed-form density needs an explicit upper truncation")
            self.upper = float(upper)
        if not self.upper > self.a:
            raise ValueError("upper truncation must exceed a")

    @classmethod
    def extremal(cls, a: float, upper_factor: float = 1e10) -> "DensityOnRay":
        """The minimizer h(y) = a/y^2; tail mass beyond upper is a/upper."""
        return cls(a, pdf_fn=lambda y: a / (y * y), upper=a * upper_factor,
                   label="extremal")

    @classmethod
    def from_callable(cls, a: float, fn, upper: float, label: str = "callable") -> "DensityOnRay":
        return cls(a, pdf_fn=fn, upper=upper, label=label)

    @classmethod
    def from_grid(cls, a: float, points, values, label: str = "grid") -> "DensityOnRay":
        return cls(a, grid=(points, values), label=label)

    def pdf(self, y: float, extend: bool = False) -> float:
        if self.grid is not None:
            if extend:
                raise ValueError("grid density cannot be evaluated below its cutoff")
            pts, vals = self.grid
            if y < pts[0] or y > pts[-1]:
                return 0.0
            return float(np.interp(y, pts, vals))
        if not extend and y < self.a:
            return 0.0
        if y <= 0.0:
            return 0.0
        return float(self.pdf_fn(y))

    def validate(self, tol: float = 1e-6) -> float:
        """Quadrature normalization check; returns the measured norm."""
        norm, _ = integrate.quad(
            lambda t: math.exp(t) * self.pdf(math.exp(t)),
            math.log(self.a), math.log(self.upper),
            epsabs=1e-10, epsrel=1e-9, limit=400,
        )
        if abs(norm - 1.0) > tol:
            raise NonNormalizedError(
                f"{self.label}: integrates to {norm!r} over (a, upper), not 1"
            )
        return float(norm)


def extremal_closed_form(a: float, delta: float) -> float:
    """Cutoff-ignored value of the functional on h(y) = a/y^2."""
    return a * (math.exp(delta) - math.exp(-delta))


def stripe_window(p: DensityOnRay, x: float, delta: float,
                  clip_lower: bool = True, epsrel: float = 1e-11) -> float:
    """Inner mass of p over the window (x*e^-delta, x*e^delta)."""
    lo = x * math.exp(-delta)
    hi = x * math.exp(delta)
    if clip_lower:
        lo = max(lo, p.a)
    if hi <= lo:
        return 0.0
    extend = not clip_lower
    val, _ = integrate.quad(lambda y: p.pdf(y, extend=extend), lo, hi,
                            epsabs=0.0, epsrel=epsrel, limit=200)
    return float(val)


def stripe_pair_functional(p: DensityOnRay, a: float, delta: float,
                           clip_lower: bool = True, check_norm: bool = True,
                           epsrel: float = 1e-11) -> float:
    """Nested quadrature of int_a x p(x) [window mass of p at x] dx.

    ``clip_lower=False`` ignores the lower cutoff in the inner window
    (closed-form densities only), which is the variant with the exact
    closed form on the extremal density.
    """
    if not 0.0 <= delta < 0.2:
        raise ValueError("delta must be in [0, 0.2)")
    if check_norm:
        p.validate()
    if delta == 0.0:
        return 0.0  # empty inner window for any continuous density
    lo = a if not clip_lower else max(a, p.a)
    extend = not clip_lower

    def integrand(t: float) -> float:
        x = math.exp(t)
        fx = p.pdf(x, extend=extend)
        if fx == 0.0:
            return 0.0
        return x * x * fx * stripe_window(p, x, delta, clip_lower, epsrel)

    t_lo, t_hi = math.log(lo), math.log(p.upper)
    # the window's lower clip disengages at x = p.a * e^delta; that kink
    # sits in a boundary layer of width delta the adaptive rule can miss
    # entirely for small delta, so force a subdivision point there
    kink = math.log(p.a) + delta
    points = [kink] if clip_lower and t_lo < kink < t_hi else None
    val, err = integrate.quad(integrand, t_lo, t_hi,
                              epsabs=0.0, epsrel=epsrel * 10.0, limit=400,
                              points=points)
    if val != 0.0 and err > 1e-8 * abs(val):
        raise QuadratureError(
            f"stripe functional error estimate {err:.3e} too large for value {val:.6e}"
        )
    return float(val)


# --- extremal minimality -------------------------------------------------


@dataclass(frozen=True)
class TrialResult:
    label: str
    claimed_logderiv: float
    measured_logderiv: float
    y_value: float
    ratio_to_extremal: float
    window_identity_ok: bool
    excluded: bool
    passed: bool
    reason: str = ""


@dataclass(frozen=True)
class MinimalityReport:
    a: float
    delta: float
    slack_constant: float
    y_extremal_clipped: float
    y_extremal_closed_form: float
    trials: list[TrialResult] = field(default_factory=list)

    @property
    def n_excluded(self) -> int:
        return sum(t.excluded for t in self.trials)

    @property
    def all_passed(self) -> bool:
        return all(t.passed for t in self.trials if not t.excluded)


def truncated_pareto(a: float, c: float) -> DensityOnRay:
    """p(y) = c*a^c / y^(1+c) on (a, inf); log-derivative magnitude 1 + c."""
    if not c > 0.0:
        raise ValueError("tail exponent must be positive")
    upper = a * (1e10 ** (1.0 / c))  # 1e-10 tail quantile
    return DensityOnRay.from_callable(
        a, lambda y: c * a**c / y ** (1.0 + c), upper, label=f"pareto_c={c:g}"
    )


def rippled_extremal(a: float, m: float, omega: float) -> DensityOnRay:
    """Extremal shape modulated by a log-periodic ripple, renormalized.

    Log-derivative magnitude is at most 2 + m*omega/(1 - m), so trials
    stay inside any generous hypothesis bound for moderate (m, omega).
    """
    if not 0.0 <= m < 1.0:
        raise ValueError("ripple amplitude must be in [0, 1)")
    norm = 1.0 + m * omega / (1.0 + omega * omega)

    def fn(y: float) -> float:
        t = math.log(y / a)
        return (a / (y * y)) * (1.0 + m * math.sin(omega * t)) / norm

    return DensityOnRay.from_callable(a, fn, a * 1e10,
                                      label=f"ripple_m={m:.3g}_w={omega:.3g}")


def _measured_logderiv(p: DensityOnRay, delta: float, n_points: int = 200) -> float:
    """Max |d log p / d log y| on a log grid over the bulk of (a, upper)."""
    ts = np.linspace(math.log(p.a * (1.0 + 1e-9)) + delta,
                     math.log(p.upper) - delta, n_points)
    h = 1e-5
    vals = []
    for t in ts:
        lo = p.pdf(math.exp(t - h))
        hi = p.pdf(math.exp(t + h))
        if lo > 0.0 and hi > 0.0:
            vals.append(abs(math.log(hi) - math.log(lo)) / (2.0 * h))
    if not vals:
        raise ValueError("density vanished on its own support; cannot measure derivative")
    return float(max(vals))


def _window_identity_ok(p: DensityOnRay, delta: float, logderiv: float) -> bool:
    """Check window mass ~= 2*delta*x*p(x) within the derivative-bound factor."""
    hi_q = p.upper ** 0.6 * p.a ** 0.4  # stay well inside the truncated support
    xs = np.exp(np.linspace(math.log(p.a) + 1.05 * delta, math.log(hi_q), 24))
    tol_factor = math.exp((logderiv + 1.0) * delta) * (1.0 + 1e-8)
    for x in xs:
        fx = p.pdf(float(x))
        if fx == 0.0:
            return False
        ratio = stripe_window(p, float(x), delta) / (2.0 * delta * x * fx)
        if not (1.0 / tol_factor <= ratio <= tol_factor):
            return False
    return True


def extremal_minimality_check(
    a: float,
    delta: float,
    n_trials: int,
    master_seed: int = 0,
    slack_constant: float = 5.0,
    trial_densities: list[DensityOnRay] | None = None,
    logderiv_cap: float | None = None,
) -> MinimalityReport:
    """Verify the extremal density minimizes the stripe functional.

    Each trial density p must respect a log-derivative cap (default
    1/delta); trials violating their measured cap are excluded and
    counted, not failed.  For the rest the check asserts
    Y[p] >= Y[h] * (1 - slack_constant*delta) and the window identity
    window_mass ~= 2*delta*x*p(x) within the derivative-bound factor.
    """
    if not 0.0 < delta <= 0.05:
        raise ValueError("minimality check calibrated for delta <= 0.05")
    cap = (1.0 / delta) if logderiv_cap is None else float(logderiv_cap)

    y_closed = extremal_closed_form(a, delta)
    h = DensityOnRay.extremal(a)
    y_clipped = stripe_pair_functional(h, a, delta, clip_lower=True, check_norm=False)

    if trial_densities is None:
        trial_densities = []
        stream = Stream(master_seed, streams.TAG_PROBE)
        for i in range(n_trials):
            u = stream.uniforms(3)
            if i % 2 == 0:
                c = math.exp(math.log(0.55) + u[0] * (math.log(3.0) - math.log(0.55)))
                trial_densities.append(truncated_pareto(a, c))
            else:
                trial_densities.append(rippled_extremal(a, 0.1 + 0.4 * u[1],
                                                        0.5 + 2.5 * u[2]))
    else:
        trial_densities = list(trial_densities)[: n_trials or None]

    threshold = y_closed * (1.0 - slack_constant * delta)
    trials = []
    for p in trial_densities:
        measured = _measured_logderiv(p, delta)
        if measured > cap * (1.0 + 1e-3):
            trials.append(TrialResult(p.label, cap, measured, math.nan, math.nan,
                                      False, excluded=True, passed=False,
                                      reason="log-derivative cap violated"))
            continue
        y_val = stripe_pair_functional(p, a, delta, clip_lower=True)
        win_ok = _window_identity_ok(p, delta, measured)
        passed = (y_val >= threshold) and win_ok
        reason = "" if passed else (
            "window identity failed" if not win_ok else "functional below threshold"
        )
        trials.append(TrialResult(p.label, cap, measured, y_val, y_val / y_closed,
                                  win_ok, excluded=False, passed=passed, reason=reason))
    return MinimalityReport(a, delta, slack_constant, y_clipped, y_closed, trials)


# --- ensemble-level gap bound --------------------------------------------


@dataclass(frozen=True)
class GapBoundReport:
    """Sampled mean pair integral vs the tail-probability lower bound."""

    hypotheses_met: bool
    n_pairs: int
    n_excluded: int
    lhs_mean: float
    standard_error: float
    rhs_bound: float
    margin_se: float
    mu: float
    tail_prob: float
    epsilon: float
    message: str = ""

    @property
    def satisfied(self) -> bool:
        return self.hypotheses_met and self.lhs_mean >= self.rhs_bound


def ensemble_gap_bound_check(
    pop: PopulationState,
    kernel: KernelSpec,
    params: BoundParams,
    n_pairs: int = 2000,
    master_seed: int = 0,
) -> GapBoundReport:
    """Check E[F(x,y)] >= delta*kappa*mu*Gamma*(1-eps)*P^2 on a snapshot.

    Pairs are sampled with replacement from the ensemble; pairs with a
    zero-wealth member or a failed quadrature are excluded and counted.
    """
    if params.epsilon is not None:
        eps = params.epsilon
    else:
        try:
            eps = params.consistent_epsilon(kernel.delta_logx, kernel.delta_logxp)
        except ValueError as exc:
            return GapBoundReport(False, 0, 0, math.nan, math.nan, math.nan,
                                  math.nan, math.nan, math.nan, math.nan,
                                  message=str(exc))
    if not kernel.has_density:
        return GapBoundReport(False, 0, 0, math.nan, math.nan, math.nan, math.nan,
                              math.nan, math.nan, eps, message="hypotheses not met: "
                              "deterministic kernel has no density")

    wealth = pop.wealth
    n = wealth.size
    mu = float(wealth.mean())
    p_tail = tail_probability(wealth, params.kappa)
    rhs = (params.delta_stripe * params.kappa * mu
           * params.gamma_inv_logderiv * (1.0 - eps) * p_tail**2)

    u1 = streams.probe_uniforms(master_seed, streams.TAG_PROBE, n_pairs, sequence=0)
    u2 = streams.probe_uniforms(master_seed, streams.TAG_PROBE, n_pairs, sequence=1)
    ii = np.minimum((u1 * n).astype(np.int64), n - 1)
    jj = np.minimum((u2 * n).astype(np.int64), n - 1)

    values = []
    excluded = 0
    for i, j in zip(ii, jj):
        xi, yj = float(wealth[i]), float(wealth[j])
        if xi <= 0.0 or yj <= 0.0:
            excluded += 1
            continue
        try:
            values.append(pair_split_integral(kernel, xi, yj))
        except QuadratureError:
            excluded += 1
    if len(values) < max(16, n_pairs // 2):
        return GapBoundReport(False, n_pairs, excluded, math.nan, math.nan, rhs,
                              math.nan, mu, p_tail, eps,
                              message="hypotheses not met: too many excluded pairs")
    arr = np.asarray(values)
    lhs = float(arr.mean())
    se = float(arr.std(ddof=1) / math.sqrt(arr.size))
    margin = (lhs - rhs) / se if se > 0.0 else math.inf
    return GapBoundReport(True, n_pairs, excluded, lhs, se, rhs, margin, mu,
                          p_tail, eps)


# --- pushforward regularity ----------------------------------------------


def _mixture_log_density(kernel: KernelSpec, sources: np.ndarray,
                         grid: np.ndarray) -> np.ndarray:
    """log of mean_i f(g | sources_i) per grid point, memory-chunked."""
    m_agents = sources.size
    x = sources[:, None]
    if kernel.family == LOGNORMAL:
        m, s = kernel.lognormal_params()
    else:
        k, theta = kernel.gamma_params()
        log_norm = sp.gammaln(k) + k * math.log(theta)
    out = np.empty(grid.size)
    chunk = max(4, int(2e6 // max(m_agents, 1)))
    for lo in range(0, grid.size, chunk):
        g = grid[lo:lo + chunk][None, :]
        ell = (g - kernel.beta) / x
        if kernel.family == LOGNORMAL:
            z = (np.log(ell) - m) / s
            lp = -np.log(ell * (s * math.sqrt(2.0 * math.pi)) * x) - 0.5 * z * z
        else:
            lp = (k - 1.0) * np.log(ell) - ell / theta - log_norm - np.log(x)
        out[lo:lo + chunk] = sp.logsumexp(lp, axis=0) - math.log(m_agents)
    return out


@dataclass(frozen=True)
class PushforwardReport:
    max_abs_logderiv_core: float
    claimed_bound: float
    core_mass: float
    grid_lo: float
    grid_hi: float
    n_excluded_agents: int

    @property
    def satisfied(self) -> bool:
        return self.max_abs_logderiv_core <= self.claimed_bound


def pushforward_log_derivative_check(
    pop_prev: PopulationState,
    kernel: KernelSpec,
    x_grid,
    claimed_bound: float,
    core_mass: float = 0.99,
    tol: float = 0.05,
) -> PushforwardReport:
    """Bound the log-derivative of the next-step population density.

    Forms p(x) = mean_i f(x | wealth_i) on the grid, differentiates
    log p against log x, and checks the magnitude against claimed_bound
    (plus tol) on the union of per-agent core windows: agent i
    contributes the interval beta + wealth_i * [q_lo, q_hi] where
    q_lo, q_hi are the growth-ratio quantiles enclosing ``core_mass``
    of its conditional mass.  The union therefore carries at least
    ``core_mass`` of the pushforward, and on it the mixture
    log-derivative is a weighted average of component log-derivatives
    that are individually controlled.  Low-density valleys between
    separated components are excluded by construction.  Raises if the
    grid is too coarse to trust the derivative (stride-2 estimate must
    agree within 10%).
    """
    if not kernel.has_density:
        raise NoDensityError("deterministic kernel has no density")
    grid = np.asarray(x_grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 16:
        raise ValueError("need a 1-D grid of at least 16 points")
    if np.any(grid <= 0.0) or np.any(np.diff(grid) <= 0.0):
        raise ValueError("grid must be positive and strictly increasing")
    if np.any(grid <= kernel.beta):
        raise ValueError("grid must stay above the support edge at beta")

    prev = pop_prev.wealth
    positive = prev[prev > 0.0]
    n_excluded = prev.size - positive.size
    if positive.size == 0:
        raise ValueError("no positive-wealth agents to push forward")

    log_p = _mixture_log_density(kernel, positive, grid)

    lt = np.log(grid)
    d = np.gradient(log_p, lt)
    d_coarse = np.interp(lt, lt[::2], np.gradient(log_p[::2], lt[::2]))

    if not 0.0 < core_mass < 1.0:
        raise ValueError("core_mass must be in (0, 1)")
    q_tail = 0.5 * (1.0 - core_mass)
    rel_sd = kernel.gamma_disp / kernel.alpha
    ratio_lo, ratio_hi = kernel.alpha * unit_mean_noise(
        kernel.family, rel_sd, np.array([q_tail, 1.0 - q_tail])
    )
    # grid node g sits in agent i's core window iff
    # wealth_i * ratio_lo <= g - beta <= wealth_i * ratio_hi,
    # i.e. some wealth lands in [(g-beta)/ratio_hi, (g-beta)/ratio_lo]
    xs = np.sort(positive)
    y = grid - kernel.beta
    lo_idx = np.searchsorted(xs, y / ratio_hi, side="left")
    hi_idx = np.searchsorted(xs, y / ratio_lo, side="right")
    core = lo_idx < hi_idx
    if np.count_nonzero(core) < 8:
        raise ValueError(
            "grid too coarse or misplaced: fewer than 8 points land in the "
            "high-probability core; refine or recentre"
        )

    rough = np.max(np.abs(d[core] - d_coarse[core]) / (1.0 + np.abs(d[core])))
    if rough > 0.1:
        raise ValueError(
            f"grid too coarse: stride-2 derivative disagrees by {rough:.2%}; "
            "double the grid resolution"
        )
    max_abs = float(np.max(np.abs(d[core])))
    return PushforwardReport(
        max_abs_logderiv_core=max_abs,
        claimed_bound=claimed_bound + tol,
        core_mass=core_mass,
        grid_lo=float(grid[0]),
        grid_hi=float(grid[-1]),
        n_excluded_agents=int(n_excluded),
    )


# --- text report serialization -------------------------------------------


def format_report(sections: list[tuple[str, dict]]) -> str:
    """Machine-parseable `[section]` + `key: value` lines."""
    out = []
    for name, fields in sections:
        out.append(f"[{name}]")
        for key, value in fields.items():
            if isinstance(value, float):
                out.append(f"{key}: {value:.12g}")
            else:
                out.append(f"{key}: {value}")
        out.append("")
    return "\n".join(out)
