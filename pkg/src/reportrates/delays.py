"""Downstream quantities: reporting delays, validations, delay decompositions.

A fitted rate for an incident profile implies a mean reporting delay of
1 / rate days (the wait for the first arrival of a Poisson process). These
helpers contextualize coefficients into delay tables, validate predicted
delays against observed ones in quantile bins, check posterior predictions
against observed duplicate counts, and decompose end-to-end resolution
times into reporting / inspection / work-order stages per group.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .design import StandardizationStats
from .fitting import FitResult

__all__ = [
    "CovariateProfile",
    "DelayEstimate",
    "BinnedComparison",
    "PosteriorPredictive",
    "expected_delay",
    "conditional_mean_delay",
    "cumulative_association",
    "record_rates",
    "posterior_predictive",
    "binned_validation",
    "end_to_end_delays",
]


@dataclass(frozen=True)
class CovariateProfile:
    """Raw covariate values plus factor levels for one incident profile.

    ``stats`` standardizes the raw values onto the scale the model was fit
    on; covariates absent from ``stats`` are passed through unchanged
    (useful for values already standardized, e.g. "average tree" == 0).
    """

    covariates: dict
    factors: dict
    stats: StandardizationStats | None = None

    def standardized(self) -> dict:
        if self.stats is None:
            return dict(self.covariates)
        out = {}
        for name, value in self.covariates.items():
            if name in self.stats.means:
                out[name] = self.stats.transform_value(name, value)
            else:
                out[name] = value
        return out


@dataclass(frozen=True)
class DelayEstimate:
    """Reporting rate and implied mean delay, optionally window-conditioned."""

    rate: float
    mean_delay: float
    window: float | None = None
    conditional_mean: float | None = None


@dataclass(frozen=True)
class BinnedComparison:
    """Predicted-vs-observed delays averaged within equal-count bins."""

    bin_predicted: np.ndarray
    bin_observed: np.ndarray
    pearson_binned: float
    pearson_individual: float
    n_bins: int


def expected_delay(
    fit: FitResult, profile: CovariateProfile, window: float | None = None
) -> DelayEstimate:
    """Mean reporting delay 1/rate for a covariate profile under a fit.

    The rate is exp(intercept + coefficients . standardized covariates +
    factor-level coefficients). Unseen factor levels raise. With ``window``
    the mean conditional on reporting within the window is also returned.
    """
    linpred = fit.linear_predictor(profile.standardized(), profile.factors)
    rate = math.exp(linpred)
    conditional = conditional_mean_delay(rate, window) if window else None
    return DelayEstimate(
        rate=rate, mean_delay=1.0 / rate, window=window, conditional_mean=conditional
    )


def conditional_mean_delay(rate: float, window: float) -> float:
    """Mean of an Exponential(rate) delay given it is below ``window``.

    Closed form 1/rate - window / (exp(rate * window) - 1); the limit for
    rate * window -> 0 is window / 2 (the delay becomes uniform on the
    window).
    """
    if rate <= 0 or window <= 0:
        raise ValueError("rate and window must be > 0")
    x = rate * window
    if x < 1e-12:
        return window / 2.0
    if x > 700.0:  # truncation correction underflows
        return 1.0 / rate
    return 1.0 / rate - window / math.expm1(x)


def cumulative_association(coefficients, profile) -> float:
    """Combined association score: dot product of profile and coefficients."""
    coefficients = np.asarray(coefficients, dtype=float)
    profile = np.asarray(profile, dtype=float)
    if coefficients.shape != profile.shape:
        raise ValueError(
            f"profile has shape {profile.shape}, "
            f"coefficients have shape {coefficients.shape}"
        )
    return float(profile @ coefficients)


def record_rates(fit: FitResult, records) -> np.ndarray:
    """Fitted reporting rate for each observation record."""
    return np.array(
        [
            math.exp(fit.linear_predictor(r.covariates, r.labels))
            for r in records
        ]
    )


@dataclass(frozen=True)
class PosteriorPredictive:
    """Predicted duplicate-count distribution against the observed one.

    ``counts`` is the grid 0..cap where the last cell collects all counts
    >= cap, so ``predicted.sum() == n_records * n_draws`` and
    ``observed.sum() == n_records`` exactly.
    """

    counts: np.ndarray
    observed: np.ndarray
    predicted: np.ndarray
    n_draws: int
    pearson_individual: float
    pearson_binned: float


def posterior_predictive(
    fit: FitResult,
    records,
    draws: int = 50,
    rng: np.random.Generator | None = None,
    cap: int = 10,
    n_bins: int = 30,
) -> PosteriorPredictive:
    """Sample duplicate counts from the fitted model and compare to observed.

    Each record's count is drawn from its fitted (zero-inflated) Poisson
    with the record's own exposure. Also reports the Pearson correlation
    between per-record predicted means and observed counts, at the
    individual level and averaged within equal-count bins.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    rates = record_rates(fit, records)
    exposures = np.array([r.exposure for r in records])
    observed = np.array([r.duplicate_count for r in records])
    mu = rates * exposures
    gamma = fit.zero_inflation or 0.0

    n = len(records)
    hist = np.zeros(cap + 1, dtype=np.int64)
    for _ in range(draws):
        sample = rng.poisson(mu)
        if gamma > 0:
            sample = np.where(rng.uniform(size=n) < gamma, 0, sample)
        hist += np.bincount(np.minimum(sample, cap), minlength=cap + 1)
    obs_hist = np.bincount(np.minimum(observed, cap), minlength=cap + 1)

    mean_pred = (1.0 - gamma) * mu
    n_bins = max(2, min(n_bins, n))
    comparison = binned_validation(mean_pred, observed.astype(float), n_bins=n_bins)
    return PosteriorPredictive(
        counts=np.arange(cap + 1),
        observed=obs_hist,
        predicted=hist,
        n_draws=draws,
        pearson_individual=comparison.pearson_individual,
        pearson_binned=comparison.pearson_binned,
    )


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    if a.size < 2 or np.std(a) == 0 or np.std(b) == 0:
        return math.nan
    return float(np.corrcoef(a, b)[0, 1])


def binned_validation(predicted, observed, n_bins: int = 30) -> BinnedComparison:
    """Equal-count bins on predicted values; per-bin means of both series.

    Records are sorted by predicted value (stable, so ties keep input
    order) and split into ``n_bins`` near-equal bins. Permuting the input
    pairs leaves the bin means unchanged.
    """
    predicted = np.asarray(predicted, dtype=float)
    observed = np.asarray(observed, dtype=float)
    if predicted.shape != observed.shape:
        raise ValueError("predicted and observed must have equal length")
    if n_bins < 2:
        raise ValueError("need at least 2 bins")
    if n_bins > predicted.size:
        raise ValueError(f"{n_bins} bins but only {predicted.size} records")
    order = np.argsort(predicted, kind="stable")
    pred_bins = np.array_split(predicted[order], n_bins)
    obs_bins = np.array_split(observed[order], n_bins)
    bin_pred = np.array([chunk.mean() for chunk in pred_bins])
    bin_obs = np.array([chunk.mean() for chunk in obs_bins])
    return BinnedComparison(
        bin_predicted=bin_pred,
        bin_observed=bin_obs,
        pearson_binned=_pearson(bin_pred, bin_obs),
        pearson_individual=_pearson(predicted, observed),
        n_bins=n_bins,
    )


def end_to_end_delays(
    records,
    fit: FitResult,
    group_label: str = "borough",
    impute_missing: bool = False,
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Median reporting / inspection / work-order delays per group.

    Reporting delay is the model-implied mean for each record; inspection
    delay is inspection time minus the first report; work-order delay is
    work-order completion minus inspection. Records missing a component are
    excluded from that component's median (and from the end-to-end totals)
    unless ``impute_missing`` replaces missing components with infinity.

    Returns ``(components, relative)``: per-group component medians
    (columns group, component, median_days), and the end-to-end totals
    (component "end_to_end") with the relative difference from the
    citywide median in percent. Groups with no records simply do not
    appear.
    """
    rates = record_rates(fit, records)
    rows = []
    for r, rate in zip(records, rates):
        group = r.labels.get(group_label, "")
        reporting = 1.0 / rate
        inspection = (
            r.inspection - r.start if r.inspection is not None else math.nan
        )
        workorder = (
            r.workorder - r.inspection
            if (r.workorder is not None and r.inspection is not None)
            else math.nan
        )
        if impute_missing:
            inspection = math.inf if math.isnan(inspection) else inspection
            workorder = math.inf if math.isnan(workorder) else workorder
        rows.append((group, reporting, inspection, workorder))
    frame = pd.DataFrame(
        rows, columns=["group", "reporting", "inspection", "workorder"]
    )
    if frame.empty:
        raise ValueError("no records")

    frame["total"] = frame["reporting"] + frame["inspection"] + frame["workorder"]
    with warnings.catch_warnings():
        # groups with a component missing everywhere get a NaN median
        warnings.simplefilter("ignore", RuntimeWarning)
        components = (
            frame.groupby("group")[["reporting", "inspection", "workorder"]]
            .median()
            .reset_index()
            .melt(id_vars="group", var_name="component", value_name="median_days")
            .sort_values(["group", "component"], kind="stable")
            .reset_index(drop=True)
        )

        citywide = float(frame["total"].median())
        totals = frame.groupby("group")["total"].median().reset_index()
    totals = totals.rename(columns={"total": "median_days"})
    totals.insert(1, "component", "end_to_end")
    totals["relative_pct"] = (
        (totals["median_days"] - citywide) / citywide * 100.0
    )
    return components, totals
