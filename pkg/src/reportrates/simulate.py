"""Ground-truth simulator for incident birth / reporting / death processes.

Incidents of a given type are born on a homogeneous Poisson process. While an
incident is alive it accumulates reports at a constant rate; after each report
a fresh "death clock" competes with the next report clock, with the death rate
scaled up geometrically in the number of reports so far. All times are
continuous, in fractional days.

Randomness is driven by the counter-based Philox generator with per-incident
substreams derived from a single 64-bit seed, so results are bit-identical for
a given (seed, config) regardless of how many replicates are drawn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

__all__ = [
    "TypeSpec",
    "IncidentTrace",
    "DurationDistribution",
    "SimConfig",
    "CalibrationError",
    "simulate_incident",
    "simulate_incident_with_duration",
    "simulate_system",
    "simulate_system_with_durations",
    "iterate_replicates",
    "calibrate_death_params",
    "steady_state_observed_rate",
    "duplicate_fraction",
]

# Stages per incident are capped to bound the report-count sampler when the
# death rate is (nearly) zero; realistic parameters never get close.
_MAX_STAGES = 5000


class CalibrationError(RuntimeError):
    """Raised when the death-rate search cannot reach the target fraction."""


@dataclass(frozen=True)
class TypeSpec:
    """Parameters of one incident type.

    ``incident_log_rate`` is the log of the incident birth rate (per day) and
    ``report_log_rate`` the log of the reporting rate of an alive incident.
    ``death_base_rate`` is the death-clock rate before any report has arrived;
    after ``m`` reports the death clock runs at
    ``death_base_rate * death_scale ** m``.
    """

    index: int
    covariates: tuple[float, ...]
    incident_log_rate: float
    report_log_rate: float
    death_base_rate: float
    death_scale: float = 1.0

    def __post_init__(self):
        # -inf is allowed for the incident rate (a type that never occurs).
        if math.isnan(self.incident_log_rate) or self.incident_log_rate == math.inf:
            raise ValueError("incident_log_rate must be < inf")
        if not math.isfinite(self.report_log_rate):
            raise ValueError("report_log_rate must be finite")
        if self.death_base_rate < 0:
            raise ValueError("death_base_rate must be >= 0")
        if self.death_scale < 1.0:
            raise ValueError("death_scale must be >= 1")

    @property
    def incident_rate(self) -> float:
        return math.exp(self.incident_log_rate)

    @property
    def report_rate(self) -> float:
        return math.exp(self.report_log_rate)


@dataclass(frozen=True)
class IncidentTrace:
    """One simulated incident with its observed report times.

    ``death_time`` is the exact death time when it was simulated, and
    ``math.inf`` when the incident was still alive once the simulation
    passed the horizon (reports beyond the horizon are discarded, so the
    exact value is irrelevant downstream: consumers take
    ``min(death_time, horizon)``).
    """

    type_index: int
    birth_time: float
    report_times: tuple[float, ...]
    death_time: float

    def __post_init__(self):
        if self.report_times:
            ts = self.report_times
            if any(b < a for a, b in zip(ts, ts[1:])):
                raise ValueError("report_times must be non-decreasing")
            if ts[0] < self.birth_time:
                raise ValueError("reports cannot precede birth")
            if self.death_time < ts[-1]:
                raise ValueError("death cannot precede the last report")

    @property
    def total_reports(self) -> int:
        return len(self.report_times)


@dataclass(frozen=True)
class DurationDistribution:
    """Distribution of incident lifetimes, supported on [0, inf).

    ``kind`` is one of ``"exponential"`` (parameter ``rate``),
    ``"point_mass"`` (parameter ``value``) or ``"empirical"``
    (parameter ``samples``).
    """

    kind: str
    rate: float | None = None
    value: float | None = None
    samples: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind == "exponential":
            if self.rate is None or self.rate <= 0:
                raise ValueError("exponential duration needs rate > 0")
        elif self.kind == "point_mass":
            if self.value is None or self.value < 0:
                raise ValueError("point_mass duration needs value >= 0")
        elif self.kind == "empirical":
            if not self.samples or min(self.samples) < 0:
                raise ValueError("empirical duration needs samples >= 0")
        else:
            raise ValueError(f"unknown duration kind {self.kind!r}")

    @classmethod
    def exponential(cls, rate: float) -> "DurationDistribution":
        return cls(kind="exponential", rate=rate)

    @classmethod
    def point_mass(cls, value: float) -> "DurationDistribution":
        return cls(kind="point_mass", value=value)

    @classmethod
    def empirical(cls, samples) -> "DurationDistribution":
        return cls(kind="empirical", samples=tuple(float(s) for s in samples))

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "exponential":
            return float(rng.exponential(1.0 / self.rate))
        if self.kind == "point_mass":
            return self.value
        return float(self.samples[rng.integers(len(self.samples))])


@dataclass(frozen=True)
class SimConfig:
    types: tuple[TypeSpec, ...]
    horizon: float
    seed: int
    replicates: int = 1

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not self.types:
            raise ValueError("at least one TypeSpec is required")


def _substream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(ss))


def simulate_incident(
    spec: TypeSpec,
    birth_time: float,
    horizon: float,
    rng: np.random.Generator,
) -> IncidentTrace:
    """Simulate one incident by competing report and death clocks.

    After ``m`` reports, a death clock ~ Exp(mu * scale**m) races a report
    clock ~ Exp(lambda); on a tie the death wins. Reports past the horizon
    are discarded, and the walk stops once it crosses the horizon.
    """
    if birth_time >= horizon:
        raise ValueError("birth_time must be before the horizon")
    lam = spec.report_rate
    mu = spec.death_base_rate
    scale = spec.death_scale

    t = birth_time
    reports: list[float] = []
    m = 0
    while m < _MAX_STAGES:
        death_rate = mu * scale**m
        d = rng.exponential(1.0 / death_rate) if death_rate > 0 else math.inf
        r = rng.exponential(1.0 / lam)
        if d <= r:
            return IncidentTrace(spec.index, birth_time, tuple(reports), t + d)
        t += r
        if t > horizon:
            # Still alive past the horizon; the exact death time no longer
            # matters and may not exist (death_base_rate == 0).
            return IncidentTrace(spec.index, birth_time, tuple(reports), math.inf)
        reports.append(t)
        m += 1
    return IncidentTrace(spec.index, birth_time, tuple(reports), math.inf)


def simulate_incident_with_duration(
    report_rate: float,
    duration: float,
    birth_time: float,
    horizon: float,
    rng: np.random.Generator,
    type_index: int = 0,
) -> IncidentTrace:
    """Simulate an incident whose lifetime is fixed in advance.

    Reports form a homogeneous Poisson process on [birth, birth + duration];
    reports past the horizon are discarded. Used when lifetimes are drawn
    independently of the reporting history.
    """
    end = birth_time + duration
    n = rng.poisson(report_rate * duration) if duration > 0 else 0
    times = np.sort(rng.uniform(birth_time, end, size=n)) if n else np.empty(0)
    kept = tuple(float(t) for t in times if t <= horizon)
    return IncidentTrace(type_index, birth_time, kept, end)


def simulate_system(config: SimConfig, replicate: int = 0) -> list[IncidentTrace]:
    """Simulate one replicate of the full system; return observed traces only.

    Incidents are born per type on a homogeneous Poisson process over
    [0, horizon]; traces with no observed report are dropped. Incident k of
    type t in replicate r draws from substream (r, t, k + 1), with (r, t, 0)
    reserved for the birth process, so output is independent of how many
    replicates are run.
    """
    if not 0 <= replicate < config.replicates:
        raise ValueError("replicate index out of range")
    observed: list[IncidentTrace] = []
    for spec in config.types:
        births_rng = _substream(config.seed, replicate, spec.index, 0)
        n_births = births_rng.poisson(spec.incident_rate * config.horizon)
        births = np.sort(births_rng.uniform(0.0, config.horizon, size=n_births))
        for k, birth in enumerate(births):
            rng = _substream(config.seed, replicate, spec.index, k + 1)
            trace = simulate_incident(spec, float(birth), config.horizon, rng)
            if trace.total_reports >= 1:
                observed.append(trace)
    return observed


def iterate_replicates(config: SimConfig):
    """Yield (replicate index, observed traces) for each replicate."""
    for r in range(config.replicates):
        yield r, simulate_system(config, replicate=r)


def simulate_system_with_durations(
    incident_rate: float,
    report_rate: float,
    duration: DurationDistribution,
    horizon: float,
    seed: int,
) -> list[IncidentTrace]:
    """System simulation with lifetimes drawn i.i.d. from ``duration``.

    Lifetimes are independent of the reporting history, so the observed
    unique-incident rate admits the closed-form steady-state value computed
    by :func:`steady_state_observed_rate`.
    """
    births_rng = _substream(seed, 0, 0, 0)
    n_births = births_rng.poisson(incident_rate * horizon)
    births = np.sort(births_rng.uniform(0.0, horizon, size=n_births))
    observed = []
    for k, birth in enumerate(births):
        rng = _substream(seed, 0, 0, k + 1)
        life = duration.sample(rng)
        trace = simulate_incident_with_duration(
            report_rate, life, float(birth), horizon, rng
        )
        if trace.total_reports >= 1:
            observed.append(trace)
    return observed


def duplicate_fraction(traces) -> float:
    """Fraction of observed reports that are duplicates (all but the first)."""
    total = sum(t.total_reports for t in traces)
    if total == 0:
        return 0.0
    dups = sum(t.total_reports - 1 for t in traces if t.total_reports >= 1)
    return dups / total


def _sample_report_counts(
    report_rate: float,
    death_base_rate: float,
    death_scale: float,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw total report counts for ``n`` incidents, marginalizing times.

    At stage m the next report beats the death clock with probability
    lambda / (lambda + mu * scale**m), independently across stages. Uniform
    draws are consumed stage by stage in a fixed order so that evaluations
    at different death rates from an identically seeded generator share
    random numbers (making the duplicate fraction monotone in mu).
    """
    counts = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    m = 0
    while active.any() and m < _MAX_STAGES:
        hazard = death_base_rate * death_scale**m
        p = report_rate / (report_rate + hazard)
        u = rng.uniform(size=n)
        active &= u < p
        counts[active] += 1
        m += 1
    return counts


def _duplicate_fraction_from_counts(counts: np.ndarray) -> float:
    observed = counts[counts >= 1]
    if observed.size == 0:
        return 0.0
    return float((observed - 1).sum() / observed.sum())


def calibrate_death_params(
    target_duplicate_fraction: float,
    report_rate: float,
    incident_rate: float,
    horizon: float,
    death_scale: float,
    seed: int,
    tol: float = 0.01,
    bracket: tuple[float, float] = (1e-4, 1e3),
    max_iter: int = 60,
) -> tuple[float, float]:
    """Search the death base rate so the duplicate fraction hits a target.

    Bisects over mu at fixed ``death_scale``, evaluating the simulated
    duplicate fraction with common random numbers (so the empirical fraction
    is exactly monotone decreasing in mu and the bisection is well posed).
    Returns ``(mu, death_scale)``. Deterministic given ``seed``.
    """
    if not 0.0 < target_duplicate_fraction < 1.0:
        raise ValueError("target fraction must be in (0, 1)")
    n = max(200_000, int(incident_rate * horizon))

    def fraction_at(mu: float) -> float:
        rng = _substream(seed, 0)
        counts = _sample_report_counts(report_rate, mu, death_scale, n, rng)
        return _duplicate_fraction_from_counts(counts)

    lo, hi = bracket
    f_lo, f_hi = fraction_at(lo), fraction_at(hi)
    if not (f_hi <= target_duplicate_fraction <= f_lo):
        raise CalibrationError(
            f"target {target_duplicate_fraction:.4f} not reachable in "
            f"mu bracket [{lo:g}, {hi:g}] "
            f"(fractions [{f_hi:.4f}, {f_lo:.4f}])"
        )
    mu = math.sqrt(lo * hi)
    for _ in range(max_iter):
        mu = math.sqrt(lo * hi)  # geometric midpoint: mu spans decades
        f = fraction_at(mu)
        if abs(f - target_duplicate_fraction) <= tol / 2 or (hi / lo) < 1.0001:
            break
        if f > target_duplicate_fraction:
            lo = mu
        else:
            hi = mu
    return mu, death_scale


def steady_state_observed_rate(
    incident_rate: float,
    report_rate: float,
    duration: DurationDistribution,
) -> float:
    """Long-run rate at which unique incidents are observed at least once.

    Equals ``incident_rate * (1 - E[exp(-report_rate * T)])`` for lifetime
    ``T ~ duration``: an incident is seen iff it receives a report while
    alive. Exact for point masses and empirical samples; adaptive quadrature
    (with the integration window chosen so the neglected tail mass is below
    1e-10) for exponential lifetimes.
    """
    if incident_rate <= 0 or report_rate <= 0:
        raise ValueError("rates must be > 0")
    lam = report_rate
    if duration.kind == "point_mass":
        missed = math.exp(-lam * duration.value)
    elif duration.kind == "empirical":
        s = np.asarray(duration.samples, dtype=float)
        missed = float(np.mean(np.exp(-lam * s)))
    else:
        mu = duration.rate
        t_max = -math.log(1e-10) / (lam + mu) * 1.5
        missed, _ = integrate.quad(
            lambda t: math.exp(-lam * t) * mu * math.exp(-mu * t), 0.0, t_max
        )
    return incident_rate * (1.0 - missed)
