"""Run configuration: one JSON document with per-subcommand blocks.

Flags override config keys. Validation errors name the offending key so a
bad config fails fast with a pointer rather than a stack trace.
"""

from __future__ import annotations

import json
from pathlib import Path

from .design import FactorSpec, ModelSpec, PenaltySpec, SpatialGraph
from .simulate import SimConfig, TypeSpec

__all__ = ["ConfigError", "load_config", "need", "sim_config_from_block", "model_spec_from_block"]


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        with open(path) as handle:
            config = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(config, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return config


def need(block: dict, key: str, kind, where: str):
    if key not in block:
        raise ConfigError(f"missing key {where}.{key}")
    value = block[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(
            f"{where}.{key} must be {getattr(kind, '__name__', kind)}, "
            f"got {type(value).__name__}"
        )
    return value


def sim_config_from_block(block: dict, seed: int) -> SimConfig:
    raw_types = need(block, "types", list, "sim")
    if not raw_types:
        raise ConfigError("sim.types must be non-empty")
    types = []
    for i, t in enumerate(raw_types):
        where = f"sim.types[{i}]"
        if not isinstance(t, dict):
            raise ConfigError(f"{where} must be an object")
        try:
            types.append(
                TypeSpec(
                    index=need(t, "index", int, where),
                    covariates=tuple(
                        float(v) for v in need(t, "covariates", list, where)
                    ),
                    incident_log_rate=need(t, "incident_log_rate", float, where),
                    report_log_rate=need(t, "report_log_rate", float, where),
                    death_base_rate=need(t, "death_base_rate", float, where),
                    death_scale=float(t.get("death_scale", 1.0)),
                )
            )
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    horizon = need(block, "horizon_days", float, "sim")
    replicates = int(block.get("replicates", 1))
    try:
        return SimConfig(
            types=tuple(types), horizon=horizon, seed=seed, replicates=replicates
        )
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from None


def model_spec_from_block(block: dict) -> ModelSpec:
    covariates = tuple(block.get("covariates", []))
    factors = []
    for i, f in enumerate(block.get("factors", [])):
        where = f"fit.factors[{i}]"
        if isinstance(f, str):
            f = {"name": f}
        if not isinstance(f, dict):
            raise ConfigError(f"{where} must be an object or a name")
        try:
            factors.append(
                FactorSpec(
                    name=need(f, "name", str, where),
                    encoding=f.get("encoding", "sum_zero"),
                    prior_scale=f.get("prior_scale", "auto"),
                )
            )
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None

    penalties = []
    for i, p in enumerate(block.get("penalties", [])):
        where = f"fit.penalties[{i}]"
        edges = need(p, "edges", list, where)
        try:
            graph = SpatialGraph.from_edges(
                [(str(a), str(b)) for a, b in edges]
            )
            penalties.append(
                PenaltySpec(
                    factor=need(p, "factor", str, where),
                    graph=graph,
                    weight=float(p.get("weight", 5.0)),
                )
            )
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None

    prior_scales = block.get("prior_scales", {"intercept": 5.0, "covariates": 1.0})
    try:
        return ModelSpec(
            covariates=covariates,
            factors=tuple(factors),
            zero_inflation=bool(block.get("zero_inflation", False)),
            penalties=tuple(penalties),
            prior_scales=prior_scales,
        )
    except ValueError as exc:
        raise ConfigError(f"fit: {exc}") from None
