"""Model specification, covariate standardization, and design assembly.

Categorical factors are encoded either drop-one (the first level is the
reference and its coefficient is fixed at zero) or sum-zero (K levels yield
K - 1 free columns; the last level's coefficient is reconstructed as minus
the sum of the others, so every level gets a reported coefficient without
collinearity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "SpatialGraph",
    "PenaltySpec",
    "FactorSpec",
    "ModelSpec",
    "StandardizationStats",
    "DesignInfo",
    "standardize_covariates",
    "assemble_design",
]


@dataclass(frozen=True)
class SpatialGraph:
    """Undirected adjacency over factor levels, for smoothing penalties.

    Edges are stored once each as (a, b) pairs of level labels; self-loops
    are rejected. A path graph over ordered labels gives the first-order
    autoregressive prior used for month effects.
    """

    labels: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]

    def __post_init__(self):
        known = set(self.labels)
        seen = set()
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"self-loop on {a!r}")
            if a not in known or b not in known:
                raise ValueError(f"edge ({a!r}, {b!r}) references unknown label")
            key = (a, b) if a <= b else (b, a)
            if key in seen:
                raise ValueError(f"duplicate edge ({a!r}, {b!r})")
            seen.add(key)

    @classmethod
    def from_edges(cls, edges) -> "SpatialGraph":
        labels = sorted({lab for e in edges for lab in e})
        normalized = tuple(
            (a, b) if a <= b else (b, a) for a, b in edges
        )
        return cls(tuple(labels), tuple(dict.fromkeys(normalized)))

    @classmethod
    def path(cls, labels) -> "SpatialGraph":
        labels = tuple(labels)
        return cls(labels, tuple(zip(labels[:-1], labels[1:])))

    def laplacian(self, level_order) -> np.ndarray:
        index = {lab: i for i, lab in enumerate(level_order)}
        for lab in self.labels:
            if lab not in index:
                raise KeyError(f"graph label {lab!r} not among factor levels")
        k = len(level_order)
        lap = np.zeros((k, k))
        for a, b in self.edges:
            i, j = index[a], index[b]
            lap[i, i] += 1.0
            lap[j, j] += 1.0
            lap[i, j] -= 1.0
            lap[j, i] -= 1.0
        return lap


@dataclass(frozen=True)
class PenaltySpec:
    """Quadratic penalty on differences of adjacent level coefficients."""

    factor: str
    graph: SpatialGraph
    weight: float = 5.0

    def __post_init__(self):
        if self.weight <= 0:
            raise ValueError("penalty weight must be > 0")


@dataclass(frozen=True)
class FactorSpec:
    """A categorical covariate and its encoding.

    ``encoding`` is ``"sum_zero"`` or ``"drop_first"``. ``prior_scale`` is
    the normal prior standard deviation for the level coefficients;
    ``"auto"`` picks 2 / sqrt(1 - 1/K) once the number of levels K is known
    (or 1.0 for graph-penalized factors, which are already regularized).
    ``None`` means a flat prior.
    """

    name: str
    encoding: str = "sum_zero"
    prior_scale: float | str | None = "auto"

    def __post_init__(self):
        if self.encoding not in ("sum_zero", "drop_first"):
            raise ValueError(f"unknown encoding {self.encoding!r}")


@dataclass(frozen=True)
class ModelSpec:
    """What to fit: covariates, factors, zero inflation, penalties, priors.

    ``prior_scales`` maps "intercept" and "covariates" to normal prior
    standard deviations; ``None`` disables priors entirely (flat), which
    reduces the fit to plain maximum likelihood.
    """

    covariates: tuple[str, ...] = ()
    factors: tuple[FactorSpec, ...] = ()
    zero_inflation: bool = False
    penalties: tuple[PenaltySpec, ...] = ()
    prior_scales: dict | None = field(
        default_factory=lambda: {"intercept": 5.0, "covariates": 1.0}
    )

    def __post_init__(self):
        if self.prior_scales is not None:
            for key, value in self.prior_scales.items():
                if value is not None and value <= 0:
                    raise ValueError(f"prior scale for {key!r} must be > 0")
        factor_names = [f.name for f in self.factors]
        if len(set(factor_names)) != len(factor_names):
            raise ValueError("duplicate factor names")
        for pen in self.penalties:
            if pen.factor not in factor_names:
                raise ValueError(f"penalty targets unknown factor {pen.factor!r}")

    def penalty_for(self, factor_name: str) -> PenaltySpec | None:
        for pen in self.penalties:
            if pen.factor == factor_name:
                return pen
        return None


@dataclass(frozen=True)
class StandardizationStats:
    """Per-covariate training means and standard deviations.

    ``log_transformed`` lists covariates that are log-transformed before
    standardizing.
    """

    means: dict
    sds: dict
    log_transformed: tuple[str, ...] = ()

    def transform_value(self, name: str, value: float) -> float:
        if name not in self.means:
            raise KeyError(f"no standardization stats for covariate {name!r}")
        if name in self.log_transformed:
            value = math.log(value)
        return (value - self.means[name]) / self.sds[name]


def standardize_covariates(
    records,
    stats: StandardizationStats | None = None,
    log_transform=(),
):
    """Replace each numeric covariate by (x - mean) / sd.

    With ``stats=None`` the statistics are computed from the input (training
    mode); otherwise the given statistics are applied (scoring mode, using
    the log-transform list stored in ``stats``). Raises on zero-variance
    covariates.
    """
    if not records:
        raise ValueError("no records to standardize")
    names = sorted(records[0].covariates)
    if stats is None:
        log_transform = tuple(log_transform)
        means, sds = {}, {}
        for name in names:
            values = np.array([r.covariates[name] for r in records], dtype=float)
            if name in log_transform:
                values = np.log(values)
            mean, sd = float(values.mean()), float(values.std())
            if sd <= 0:
                raise ValueError(f"covariate {name!r} has zero variance")
            means[name], sds[name] = mean, sd
        stats = StandardizationStats(means, sds, log_transform)

    out = []
    for r in records:
        cov = {
            name: stats.transform_value(name, value)
            for name, value in r.covariates.items()
        }
        out.append(replace(r, covariates=cov))
    return out, stats


@dataclass(frozen=True)
class _FactorLayout:
    name: str
    levels: tuple[str, ...]
    encoding: str
    free_slice: tuple[int, int]   # columns in the free design matrix
    full_slice: tuple[int, int]   # rows in the full coefficient vector


@dataclass(frozen=True)
class DesignInfo:
    """Column layout tying free parameters to reported coefficients.

    ``expansion`` is the (n_full x n_free) matrix T with full = T @ free:
    identity rows for the intercept and numeric covariates, a [I; -1] block
    for each sum-zero factor, and an all-zero row for each drop-one
    reference level.
    """

    covariates: tuple[str, ...]
    factor_layouts: tuple[_FactorLayout, ...]
    full_names: tuple[str, ...]
    expansion: np.ndarray
    n_free: int

    def full_slice(self, factor_name: str) -> tuple[int, int]:
        for layout in self.factor_layouts:
            if layout.name == factor_name:
                return layout.full_slice
        raise KeyError(f"unknown factor {factor_name!r}")

    def levels(self, factor_name: str) -> tuple[str, ...]:
        for layout in self.factor_layouts:
            if layout.name == factor_name:
                return layout.levels
        raise KeyError(f"unknown factor {factor_name!r}")

    def matrix(self, records) -> np.ndarray:
        """Free-parameter design matrix for ``records`` under this layout.

        Fails on factor levels that were not present when the layout was
        built.
        """
        n = len(records)
        x = np.zeros((n, self.n_free))
        x[:, 0] = 1.0
        for j, name in enumerate(self.covariates):
            for i, r in enumerate(records):
                if name not in r.covariates:
                    raise KeyError(
                        f"record {r.incident_id!r} lacks covariate {name!r}"
                    )
                x[i, 1 + j] = r.covariates[name]
        for layout in self.factor_layouts:
            index = {lev: k for k, lev in enumerate(layout.levels)}
            lo, hi = layout.free_slice
            k_levels = len(layout.levels)
            for i, r in enumerate(records):
                level = r.labels.get(layout.name)
                if level not in index:
                    raise KeyError(
                        f"unseen level {level!r} for factor {layout.name!r}"
                    )
                k = index[level]
                if layout.encoding == "sum_zero":
                    if k < k_levels - 1:
                        x[i, lo + k] = 1.0
                    else:
                        x[i, lo:hi] = -1.0
                else:
                    if k >= 1:
                        x[i, lo + k - 1] = 1.0
        return x


def assemble_design(records, spec: ModelSpec, info: DesignInfo | None = None):
    """Build (or apply) the design layout and return (X, info).

    In fit mode (``info=None``) factor levels are collected from the data in
    sorted order. In scoring mode the given layout is applied and unseen
    levels raise.
    """
    if info is None:
        layouts = []
        free_col = 1 + len(spec.covariates)
        full_row = 1 + len(spec.covariates)
        for fac in spec.factors:
            levels = sorted({r.labels.get(fac.name, "") for r in records})
            if "" in levels or None in levels:
                raise ValueError(f"records missing label for factor {fac.name!r}")
            if len(levels) < 2:
                raise ValueError(f"factor {fac.name!r} needs >= 2 levels")
            k = len(levels)
            n_free = k - 1
            layouts.append(
                _FactorLayout(
                    name=fac.name,
                    levels=tuple(levels),
                    encoding=fac.encoding,
                    free_slice=(free_col, free_col + n_free),
                    full_slice=(full_row, full_row + k),
                )
            )
            free_col += n_free
            full_row += k

        full_names = ["intercept", *spec.covariates]
        for layout in layouts:
            full_names += [f"{layout.name}[{lev}]" for lev in layout.levels]

        expansion = np.zeros((full_row, free_col))
        for i in range(1 + len(spec.covariates)):
            expansion[i, i] = 1.0
        for layout in layouts:
            lo_f, hi_f = layout.free_slice
            lo, hi = layout.full_slice
            if layout.encoding == "sum_zero":
                expansion[lo : hi - 1, lo_f:hi_f] = np.eye(hi_f - lo_f)
                expansion[hi - 1, lo_f:hi_f] = -1.0
            else:
                # reference level row (first) stays zero
                expansion[lo + 1 : hi, lo_f:hi_f] = np.eye(hi_f - lo_f)

        info = DesignInfo(
            covariates=tuple(spec.covariates),
            factor_layouts=tuple(layouts),
            full_names=tuple(full_names),
            expansion=expansion,
            n_free=free_col,
        )
    return info.matrix(records), info
