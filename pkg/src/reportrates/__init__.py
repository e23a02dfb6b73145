"""Reporting-rate estimation from duplicate incident reports.

The package covers the full workflow: simulate ground-truth incident /
report / death traces, turn raw report logs into observation records with
valid (past-measurable) windows, fit Poisson and zero-inflated Poisson
rate regressions with optional graph smoothing, and derive reporting-delay
analyses from the fits.
"""

from .delays import (
    BinnedComparison,
    CovariateProfile,
    DelayEstimate,
    PosteriorPredictive,
    binned_validation,
    conditional_mean_delay,
    cumulative_association,
    end_to_end_delays,
    expected_delay,
    posterior_predictive,
    record_rates,
)
from .design import (
    DesignInfo,
    FactorSpec,
    ModelSpec,
    PenaltySpec,
    SpatialGraph,
    StandardizationStats,
    assemble_design,
    standardize_covariates,
)
from .fitting import (
    EstimationError,
    FitError,
    FitResult,
    LaplaceError,
    NumericalError,
    PosteriorSummary,
    fit_map,
    graph_penalty,
    laplace_intervals,
    mle_rate,
    naive_rate,
    poisson_loglik,
    sample_posterior_metropolis,
    zip_loglik,
)
from .intervals import (
    FilterReport,
    IntervalPolicy,
    ObservationRecord,
    ReportRow,
    build_interval,
    build_observations,
    filter_repeat_callers,
    group_into_incidents,
    records_from_traces,
)
from .simulate import (
    CalibrationError,
    DurationDistribution,
    IncidentTrace,
    SimConfig,
    TypeSpec,
    calibrate_death_params,
    duplicate_fraction,
    iterate_replicates,
    simulate_incident,
    simulate_incident_with_duration,
    simulate_system,
    simulate_system_with_durations,
    steady_state_observed_rate,
)

__all__ = [name for name in dir() if not name.startswith("_")]
