"""Monte Carlo wealth-concentration dynamics and inequality verification.

The package simulates ensembles of agents whose wealth is multiplied by
positive random growth and shifted by a transfer each step, measures
concentration (coefficient of variation, Gini, tail mass), and checks
the closed-form inequalities that govern when concentration must grow
and when a transfer can stop it.  A quadrature layer verifies the
pair-integral machinery behind the tail bounds independently of any
simulation.
"""

from .bounds import (
    AdaptationMoments,
    BoundCheck,
    BoundParams,
    BoundRecord,
    MinSalary,
    adaptation_substitution,
    cv_growth_lower_bound,
    cv_halting_condition,
    general_cv_condition,
    gini_growth_lower_bound,
    gini_halting_tail_bound,
    min_salary_small_dispersion,
    redistribution_variability_lower_bound,
    saturation_lower_bound,
    step_bound_report,
)
from .config import ConfigError, InitialSpec, RunConfig, SearchSpec, load_config, parse_config
from .dynamics import (
    GrowthPolicy,
    PopulationState,
    make_initial,
    mean_evolution,
    run,
    simulate,
    step,
)
from .experiments import (
    AmbiguousProbeError,
    BracketError,
    MonotonicityError,
    ProbeRecord,
    ScenarioResult,
    ThresholdSearchResult,
    bisect_threshold,
    classify_trajectory,
    find_min_stabilizing_salary_fraction,
    run_scenario,
)
from .kernels import (
    DETERMINISTIC,
    GAMMA,
    LOGNORMAL,
    KernelSpec,
    MassEstimate,
    NoDensityError,
    OutsideSupportError,
    conditional_mean,
    conditional_variance,
    density,
    high_probability_mass,
    log_density,
    log_derivative_probe,
    sample_transition,
    unit_mean_noise,
)
from .metrics import (
    SnapshotMetrics,
    coefficient_of_variation,
    gini,
    snapshot,
    tail_probability,
)
from .verification import (
    CalibrationResult,
    DensityOnRay,
    GapBoundReport,
    MinimalityReport,
    NonNormalizedError,
    PushforwardReport,
    QuadratureError,
    calibrate_log_derivative_bound,
    diagonal_bound_check,
    ensemble_gap_bound_check,
    extremal_closed_form,
    extremal_minimality_check,
    pair_split_integral,
    pair_split_monte_carlo,
    pushforward_log_derivative_check,
    stripe_pair_functional,
    stripe_window,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptationMoments",
    "AmbiguousProbeError",
    "BoundCheck",
    "BoundParams",
    "BoundRecord",
    "BracketError",
    "CalibrationResult",
    "ConfigError",
    "DETERMINISTIC",
    "DensityOnRay",
    "GAMMA",
    "GapBoundReport",
    "GrowthPolicy",
    "InitialSpec",
    "KernelSpec",
    "LOGNORMAL",
    "MassEstimate",
    "MinSalary",
    "MinimalityReport",
    "MonotonicityError",
    "NoDensityError",
    "NonNormalizedError",
    "OutsideSupportError",
    "PopulationState",
    "ProbeRecord",
    "PushforwardReport",
    "QuadratureError",
    "RunConfig",
    "ScenarioResult",
    "SearchSpec",
    "SnapshotMetrics",
    "ThresholdSearchResult",
    "adaptation_substitution",
    "bisect_threshold",
    "calibrate_log_derivative_bound",
    "classify_trajectory",
    "coefficient_of_variation",
    "conditional_mean",
    "conditional_variance",
    "cv_growth_lower_bound",
    "cv_halting_condition",
    "density",
    "diagonal_bound_check",
    "ensemble_gap_bound_check",
    "extremal_closed_form",
    "extremal_minimality_check",
    "find_min_stabilizing_salary_fraction",
    "general_cv_condition",
    "gini",
    "gini_growth_lower_bound",
    "gini_halting_tail_bound",
    "high_probability_mass",
    "load_config",
    "log_density",
    "log_derivative_probe",
    "make_initial",
    "mean_evolution",
    "min_salary_small_dispersion",
    "pair_split_integral",
    "pair_split_monte_carlo",
    "parse_config",
    "pushforward_log_derivative_check",
    "redistribution_variability_lower_bound",
    "run",
    "run_scenario",
    "sample_transition",
    "saturation_lower_bound",
    "simulate",
    "snapshot",
    "step",
    "step_bound_report",
    "stripe_pair_functional",
    "stripe_window",
    "tail_probability",
    "unit_mean_noise",
]
