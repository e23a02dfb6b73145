"""Turn raw report logs into per-incident observation records.

The pipeline is: drop repeat callers, group reports into incidents, and
construct for each incident a half-open observation window (s, e] whose
endpoints depend only on the past (first report, agency responses, fixed
maximum duration) -- never on later reports. The duplicate count inside the
window is then a clean Poisson count with exposure e - s.

All timestamps are handled internally as fractional days since the Unix
epoch (ISO-8601 inputs, naive values treated as UTC).
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

__all__ = [
    "ReportRow",
    "IntervalPolicy",
    "ObservationRecord",
    "Rejection",
    "FilterReport",
    "parse_timestamp",
    "format_timestamp",
    "filter_repeat_callers",
    "group_into_incidents",
    "build_interval",
    "build_observations",
    "records_from_traces",
]

SECONDS_PER_DAY = 86400.0


def parse_timestamp(value: str | None) -> float | None:
    """ISO-8601 timestamp -> fractional days since the Unix epoch."""
    if value is None or value == "":
        return None
    if value.endswith(("Z", "z")):
        value = value[:-1] + "+00:00"
    dt = datetime.fromisoformat(value)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp() / SECONDS_PER_DAY


def format_timestamp(days: float) -> str:
    dt = datetime.fromtimestamp(days * SECONDS_PER_DAY, tz=timezone.utc)
    return dt.isoformat().replace("+00:00", "Z")


@dataclass(frozen=True)
class ReportRow:
    """One raw service request.

    Caller identifiers are opaque hashes; empty strings mean "not provided".
    ``covariates`` holds the numeric incident-level fields; NaN means missing.
    """

    report_id: str
    incident_id: str | None
    created: float
    category: str = ""
    borough: str = ""
    tract_id: str = ""
    first_name: str = ""
    last_name: str = ""
    phone: str = ""
    email: str = ""
    inspection: float | None = None
    workorder: float | None = None
    closed: float | None = None
    covariates: dict = field(default_factory=dict)


@dataclass(frozen=True)
class IntervalPolicy:
    """How the observation window end is chosen.

    ``nyc``: e = min(s + max_duration, inspection, work order).
    ``chicago``: e = min(s + max_duration, closed, data retrieval time).
    ``incorrect_last_report``: e = time of the last report. This end point
    peeks at the future and is only provided to demonstrate the resulting
    upward bias; never use it for real estimates.
    """

    variant: str = "nyc"
    max_duration: float = 100.0
    data_retrieval_time: float | None = None
    min_duration: float = 0.1

    def __post_init__(self):
        if self.variant not in ("nyc", "chicago", "incorrect_last_report"):
            raise ValueError(f"unknown policy variant {self.variant!r}")
        if self.max_duration <= 0:
            raise ValueError("max_duration must be > 0")
        if self.variant == "chicago" and self.data_retrieval_time is None:
            raise ValueError("chicago policy requires data_retrieval_time")

    @classmethod
    def nyc(cls, max_duration: float = 100.0, min_duration: float = 0.1):
        return cls("nyc", max_duration, None, min_duration)

    @classmethod
    def chicago(
        cls,
        data_retrieval_time: float,
        max_duration: float = 100.0,
        min_duration: float = 0.01,
    ):
        return cls("chicago", max_duration, data_retrieval_time, min_duration)


@dataclass(frozen=True)
class ObservationRecord:
    """One analysis row: observation window, duplicate count, covariates.

    ``duplicate_count`` counts reports strictly after ``start`` and at or
    before ``end``; the first report is never included.
    """

    incident_id: str
    start: float
    end: float
    duplicate_count: int
    covariates: dict
    labels: dict = field(default_factory=dict)
    inspection: float | None = None
    workorder: float | None = None

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError("observation window must have positive length")
        if self.duplicate_count < 0:
            raise ValueError("duplicate_count must be >= 0")

    @property
    def exposure(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class Rejection:
    incident_id: str
    reason: str


@dataclass
class FilterReport:
    """Counts of dropped rows/incidents by reason; mandatory pipeline output."""

    counts: dict = field(default_factory=dict)

    def add(self, reason: str, n: int = 1):
        if n:
            self.counts[reason] = self.counts.get(reason, 0) + n

    def total(self) -> int:
        return sum(self.counts.values())


def _identifiers_match(row: ReportRow, earlier: ReportRow, conservative: bool) -> bool:
    if row.phone and row.phone == earlier.phone:
        return True
    if row.email and row.email == earlier.email:
        return True
    if (
        row.first_name
        and row.last_name
        and row.first_name == earlier.first_name
        and row.last_name == earlier.last_name
    ):
        return True
    if conservative:
        row_blank = not (row.phone or row.email or row.first_name or row.last_name)
        earlier_blank = not (
            earlier.phone or earlier.email or earlier.first_name or earlier.last_name
        )
        if row_blank and earlier_blank:
            return True
    return False


def filter_repeat_callers(rows, conservative: bool = False) -> list[ReportRow]:
    """Drop reports that repeat an earlier caller for the same incident.

    A report is dropped when any earlier *retained* report of the same
    incident matches on phone, on email, or on both first and last name.
    With ``conservative=True`` a report with no identifiers at all also
    matches any earlier retained identifier-less report. Rows are compared
    in time order; input order is preserved in the output.
    """
    order = sorted(range(len(rows)), key=lambda i: (rows[i].created, i))
    retained_by_incident: dict = {}
    dropped: set[int] = set()
    for i in order:
        row = rows[i]
        key = row.incident_id
        if key is None:
            continue
        retained = retained_by_incident.setdefault(key, [])
        if any(_identifiers_match(row, prev, conservative) for prev in retained):
            dropped.add(i)
        else:
            retained.append(row)
    return [r for i, r in enumerate(rows) if i not in dropped]


def group_into_incidents(rows) -> tuple[OrderedDict, int]:
    """Group reports by incident label, sorted by creation time within group.

    Returns ``(groups, n_missing)`` where ``n_missing`` counts rows without
    an incident label (these cannot be analyzed and are dropped).
    """
    groups: OrderedDict = OrderedDict()
    missing = 0
    for row in rows:
        if row.incident_id is None or row.incident_id == "":
            missing += 1
            continue
        groups.setdefault(row.incident_id, []).append(row)
    for key in groups:
        groups[key] = sorted(groups[key], key=lambda r: r.created)
    return groups, missing


def _month_label(days: float) -> str:
    dt = datetime.fromtimestamp(days * SECONDS_PER_DAY, tz=timezone.utc)
    return f"{dt.year:04d}-{dt.month:02d}"


def build_interval(group, policy: IntervalPolicy) -> ObservationRecord | Rejection:
    """Construct the observation record for one incident group.

    The window starts at the first report. Covariates and labels are taken
    from the first report. Reports with timestamp exactly equal to the window
    end are counted; the first report is not.
    """
    if not group:
        raise ValueError("empty incident group")
    group = sorted(group, key=lambda r: r.created)
    first = group[0]
    start = first.created

    if policy.variant == "incorrect_last_report":
        end = group[-1].created
    elif policy.variant == "chicago":
        candidates = [start + policy.max_duration, policy.data_retrieval_time]
        if first.closed is not None:
            candidates.append(first.closed)
        end = min(candidates)
    else:
        if first.inspection is not None and first.inspection < start:
            return Rejection(first.incident_id, "inspection_before_first_report")
        candidates = [start + policy.max_duration]
        if first.inspection is not None:
            candidates.append(first.inspection)
        if first.workorder is not None:
            candidates.append(first.workorder)
        end = min(candidates)

    exposure = end - start
    if exposure <= 0:
        return Rejection(first.incident_id, "non_positive_exposure")
    if exposure < policy.min_duration:
        return Rejection(first.incident_id, "short_exposure")

    duplicates = sum(1 for r in group if start < r.created <= end)
    labels = {
        "category": first.category,
        "borough": first.borough,
        "tract": first.tract_id,
        "month": _month_label(start),
    }
    return ObservationRecord(
        incident_id=first.incident_id,
        start=start,
        end=end,
        duplicate_count=duplicates,
        covariates=dict(first.covariates),
        labels=labels,
        inspection=first.inspection,
        workorder=first.workorder,
    )


def build_observations(
    rows,
    policy: IntervalPolicy,
    conservative_repeat_filter: bool = False,
    required_covariates=(),
) -> tuple[list[ObservationRecord], FilterReport]:
    """Full pipeline: repeat-caller filter, grouping, interval construction.

    Incidents missing any covariate named in ``required_covariates`` are
    dropped with a reason. Returns the accepted records and the filter
    report with per-reason drop counts.
    """
    report = FilterReport()
    kept = filter_repeat_callers(rows, conservative=conservative_repeat_filter)
    report.add("repeat_caller", len(rows) - len(kept))
    groups, missing = group_into_incidents(kept)
    report.add("missing_incident_id", missing)

    records = []
    for group in groups.values():
        result = build_interval(group, policy)
        if isinstance(result, Rejection):
            report.add(result.reason)
            continue
        bad = [
            name
            for name in required_covariates
            if name not in result.covariates
            or not math.isfinite(result.covariates[name])
        ]
        if bad:
            report.add("missing_covariates")
            continue
        records.append(result)
    return records, report


def records_from_traces(
    traces,
    types,
    horizon: float,
    variant: str = "death",
    min_duration: float = 0.0,
) -> list[ObservationRecord]:
    """Observation records for simulated traces with known death times.

    ``variant="death"`` ends the window at min(death time, horizon), which
    depends only on the past; ``variant="last_report"`` ends it at the last
    report, reproducing the biased construction. Traces whose window has
    length <= ``min_duration`` are skipped (for the biased variant this
    silently drops single-report incidents, which carry no duplicates and
    no exposure).
    """
    if variant not in ("death", "last_report"):
        raise ValueError(f"unknown variant {variant!r}")
    by_index = {t.index: t for t in types}
    records = []
    for i, trace in enumerate(traces):
        if trace.total_reports == 0:
            continue
        start = trace.report_times[0]
        if variant == "death":
            end = min(trace.death_time, horizon)
        else:
            end = trace.report_times[-1]
        if end - start <= min_duration:
            continue
        spec = by_index[trace.type_index]
        covariates = {
            f"theta{j + 1}": v for j, v in enumerate(spec.covariates)
        }
        duplicates = sum(1 for t in trace.report_times if start < t <= end)
        records.append(
            ObservationRecord(
                incident_id=f"sim-{trace.type_index}-{i}",
                start=start,
                end=end,
                duplicate_count=duplicates,
                covariates=covariates,
                labels={"type": str(trace.type_index)},
            )
        )
    return records
