"""Command-line surface tying simulation, dataset construction, fitting,
and analysis into reproducible runs.

One JSON config with per-subcommand blocks; ``--seed`` overrides the config
seed. Every command is deterministic given (inputs, config, seed) and every
output file carries a provenance header.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np
import pandas as pd

from . import delays as delays_mod
from . import fitting, intervals, ioutil, simulate
from .config import ConfigError, load_config, model_spec_from_block, need
from .config import sim_config_from_block
from .design import StandardizationStats, standardize_covariates
from .intervals import IntervalPolicy, ReportRow


def _seed_from(args, config: dict, block: dict | None = None) -> int:
    if args.seed is not None:
        return args.seed
    if block and "seed" in block:
        return int(block["seed"])
    if "seed" in config:
        return int(config["seed"])
    raise ConfigError("missing key seed (set it in the config or pass --seed)")


def _block(config: dict, name: str) -> dict:
    if name not in config:
        raise ConfigError(f"missing config block {name!r}")
    if not isinstance(config[name], dict):
        raise ConfigError(f"config block {name!r} must be an object")
    return config[name]


def _out(args, filename: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, filename)


def cmd_simulate(args, config: dict) -> int:
    block = _block(config, "sim")
    seed = _seed_from(args, config, block)
    sim_config = sim_config_from_block(block, seed)
    prov = ioutil.provenance(config, seed)

    rows = []
    per_type: dict = {}
    for rep, traces in simulate.iterate_replicates(sim_config):
        for i, trace in enumerate(traces):
            rows.append(
                {
                    "incident_id": f"r{rep}-t{trace.type_index}-i{i}",
                    "type_index": trace.type_index,
                    "birth": trace.birth_time,
                    "death": trace.death_time,
                    "report_times": ";".join(
                        ioutil.FLOAT_FORMAT % t for t in trace.report_times
                    ),
                }
            )
            stats = per_type.setdefault(
                trace.type_index, {"incidents": 0, "reports": 0, "duplicates": 0}
            )
            stats["incidents"] += 1
            stats["reports"] += trace.total_reports
            stats["duplicates"] += trace.total_reports - 1

    ioutil.write_table(_out(args, "traces.csv"), pd.DataFrame(rows), prov)
    total_reports = sum(s["reports"] for s in per_type.values())
    total_dups = sum(s["duplicates"] for s in per_type.values())
    summary = {
        "replicates": sim_config.replicates,
        "horizon_days": sim_config.horizon,
        "per_type": {str(k): per_type[k] for k in sorted(per_type)},
        "observed_incidents": sum(s["incidents"] for s in per_type.values()),
        "total_reports": total_reports,
        "duplicate_fraction": (total_dups / total_reports) if total_reports else 0.0,
    }
    ioutil.write_json(_out(args, "summary.json"), summary, prov)
    return 0


def cmd_calibrate(args, config: dict) -> int:
    block = _block(config, "calibrate")
    seed = _seed_from(args, config, block)
    target = need(block, "target_duplicate_fraction", float, "calibrate")
    mu, scale = simulate.calibrate_death_params(
        target_duplicate_fraction=target,
        report_rate=need(block, "report_rate", float, "calibrate"),
        incident_rate=need(block, "incident_rate", float, "calibrate"),
        horizon=need(block, "horizon_days", float, "calibrate"),
        death_scale=need(block, "death_scale", float, "calibrate"),
        seed=seed,
        tol=float(block.get("tolerance", 0.01)),
    )
    payload = {
        "death_base_rate": mu,
        "death_scale": scale,
        "target_duplicate_fraction": target,
    }
    ioutil.write_json(
        _out(args, "calibration.json"), payload, ioutil.provenance(config, seed)
    )
    return 0


def _report_rows_from_csv(path: str) -> list[ReportRow]:
    frame = pd.read_csv(path, comment="#", dtype=str, keep_default_na=False)
    required = ["report_id", "incident_id", "created_ts"]
    for column in required:
        if column not in frame.columns:
            raise ConfigError(f"reports CSV is missing column {column!r}")
    known = {
        "report_id",
        "incident_id",
        "created_ts",
        "category",
        "borough",
        "tract_id",
        "first_name",
        "last_name",
        "phone",
        "email",
        "inspection_ts",
        "workorder_ts",
        "closed_ts",
    }
    covariate_cols = [c for c in frame.columns if c not in known]
    rows = []
    for i, data in enumerate(frame.to_dict("records")):
        covariates = {}
        for c in covariate_cols:
            text = data.get(c, "")
            try:
                covariates[c] = float(text) if text != "" else math.nan
            except ValueError:
                raise ConfigError(
                    f"reports CSV column {c!r} row {i}: {text!r} is not numeric"
                ) from None
        try:
            created = intervals.parse_timestamp(data["created_ts"])
        except ValueError:
            raise ConfigError(
                f"reports CSV column 'created_ts' row {i}: "
                f"{data['created_ts']!r} is not an ISO-8601 timestamp"
            ) from None
        rows.append(
            ReportRow(
                report_id=data["report_id"],
                incident_id=data["incident_id"] or None,
                created=created,
                category=data.get("category", ""),
                borough=data.get("borough", ""),
                tract_id=data.get("tract_id", ""),
                first_name=data.get("first_name", ""),
                last_name=data.get("last_name", ""),
                phone=data.get("phone", ""),
                email=data.get("email", ""),
                inspection=intervals.parse_timestamp(data.get("inspection_ts")),
                workorder=intervals.parse_timestamp(data.get("workorder_ts")),
                closed=intervals.parse_timestamp(data.get("closed_ts")),
                covariates=covariates,
            )
        )
    return rows


def cmd_build(args, config: dict) -> int:
    block = _block(config, "build")
    seed = _seed_from(args, config, block)
    policy_block = _block(block, "policy") if "policy" in block else {}
    variant = policy_block.get("variant", "nyc")
    retrieval = policy_block.get("data_retrieval_ts")
    try:
        policy = IntervalPolicy(
            variant=variant,
            max_duration=float(policy_block.get("max_duration_days", 100.0)),
            data_retrieval_time=(
                intervals.parse_timestamp(retrieval) if retrieval else None
            ),
            min_duration=float(
                policy_block.get(
                    "min_duration_days", 0.01 if variant == "chicago" else 0.1
                )
            ),
        )
    except ValueError as exc:
        raise ConfigError(f"build.policy: {exc}") from None

    rows = _report_rows_from_csv(args.reports)
    covariates = tuple(block.get("covariates", []))
    records, report = intervals.build_observations(
        rows,
        policy,
        conservative_repeat_filter=bool(
            block.get("conservative_repeat_filter", False)
        ),
        required_covariates=covariates,
    )
    stats_payload = None
    if records and covariates:
        records, stats = standardize_covariates(
            records, log_transform=tuple(block.get("log_transform", []))
        )
        stats_payload = {
            "means": stats.means,
            "sds": stats.sds,
            "log_transformed": list(stats.log_transformed),
        }

    prov = ioutil.provenance(config, seed)
    frame = ioutil.records_to_frame(records) if records else pd.DataFrame(
        columns=["incident_id", "s", "e", "exposure_days", "m_tilde"]
    )
    ioutil.write_table(_out(args, "observations.csv"), frame, prov)
    payload = {
        "input_rows": len(rows),
        "accepted_incidents": len(records),
        "dropped": report.counts,
        "standardization": stats_payload,
    }
    ioutil.write_json(_out(args, "filter_report.json"), payload, prov)
    return 0


def _fit_table(fit: fitting.FitResult) -> pd.DataFrame:
    rows = []
    for i, name in enumerate(fit.names):
        rows.append(
            {
                "name": name,
                "mean": float(fit.estimates[i]),
                "sd": float(fit.sd[i]) if fit.sd is not None else math.nan,
                "q2.5": float(fit.q025[i]) if fit.q025 is not None else math.nan,
                "q97.5": float(fit.q975[i]) if fit.q975 is not None else math.nan,
            }
        )
    if fit.zero_inflation is not None:
        lo, hi = fit.zero_inflation_interval or (math.nan, math.nan)
        rows.append(
            {
                "name": "zero_inflation",
                "mean": fit.zero_inflation,
                "sd": fit.zero_inflation_sd
                if fit.zero_inflation_sd is not None
                else math.nan,
                "q2.5": lo,
                "q97.5": hi,
            }
        )
    return pd.DataFrame(rows)


def cmd_fit(args, config: dict) -> int:
    block = _block(config, "fit")
    seed = _seed_from(args, config, block)
    spec = model_spec_from_block(block)
    records = ioutil.frame_to_records(ioutil.read_table(args.observations))
    prov = ioutil.provenance(config, seed)
    try:
        fit = fitting.fit_map(
            spec,
            records,
            max_iter=int(block.get("max_iter", 500)),
            tol=float(block.get("tol", 1e-8)),
        )
    except fitting.FitError as exc:
        ioutil.write_json(
            _out(args, "diagnostics.json"),
            {
                "converged": False,
                "error": str(exc),
                "gradient_norm": exc.gradient_norm,
            },
            prov,
        )
        print(f"error: {exc}", file=sys.stderr)
        return 1
    fit = fitting.laplace_intervals(fit)
    ioutil.write_table(_out(args, "coefficients.csv"), _fit_table(fit), prov)
    ioutil.write_json(
        _out(args, "diagnostics.json"),
        {
            "converged": True,
            "iterations": fit.iterations,
            "gradient_norm": fit.gradient_norm,
            "log_posterior": fit.log_posterior,
            "n_records": len(records),
        },
        prov,
    )
    return 0


def cmd_sample(args, config: dict) -> int:
    block = _block(config, "fit")
    sample_block = config.get("sample", {})
    seed = _seed_from(args, config, sample_block)
    spec = model_spec_from_block(block)
    records = ioutil.frame_to_records(ioutil.read_table(args.observations))
    summary = fitting.sample_posterior_metropolis(
        spec,
        records,
        chains=int(sample_block.get("chains", 4)),
        warmup=int(sample_block.get("warmup", 150)),
        iters=int(sample_block.get("iters", 300)),
        seed=seed,
    )
    frame = pd.DataFrame(
        {
            "name": summary.names,
            "mean": summary.mean,
            "sd": summary.sd,
            "q2.5": summary.q025,
            "q50": summary.q50,
            "q97.5": summary.q975,
            "rhat": summary.rhat,
        }
    )
    prov = ioutil.provenance(config, seed)
    ioutil.write_table(_out(args, "samples.csv"), frame, prov)
    ioutil.write_json(
        _out(args, "sample_diagnostics.json"),
        {
            "converged": summary.converged,
            "max_rhat": float(np.max(summary.rhat)),
            "acceptance_rates": list(summary.acceptance_rates),
            "n_draws": summary.n_draws,
        },
        prov,
    )
    if not summary.converged:
        print("warning: split-Rhat above 1.05; chains not converged", file=sys.stderr)
    return 0


def cmd_ppc(args, config: dict) -> int:
    block = config.get("ppc", {})
    seed = _seed_from(args, config, block)
    fit = ioutil.fit_from_table(ioutil.read_table(args.fit))
    records = ioutil.frame_to_records(ioutil.read_table(args.observations))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    result = delays_mod.posterior_predictive(
        fit,
        records,
        draws=int(block.get("draws", 50)),
        rng=rng,
        cap=int(block.get("cap", 10)),
    )
    prov = ioutil.provenance(config, seed)
    frame = pd.DataFrame(
        {
            "count": result.counts,
            "observed": result.observed,
            "predicted": result.predicted,
        }
    )
    ioutil.write_table(_out(args, "ppc.csv"), frame, prov)
    ioutil.write_json(
        _out(args, "ppc.json"),
        {
            "draws": result.n_draws,
            "pearson_individual": result.pearson_individual,
            "pearson_binned": result.pearson_binned,
        },
        prov,
    )
    return 0


def cmd_validate(args, config: dict) -> int:
    block = config.get("validate", {})
    seed = _seed_from(args, config, block)
    frame = ioutil.read_table(args.delays)
    for column in ("predicted", "observed"):
        if column not in frame.columns:
            raise ConfigError(f"delays CSV is missing column {column!r}")
    comparison = delays_mod.binned_validation(
        frame["predicted"].to_numpy(),
        frame["observed"].to_numpy(),
        n_bins=int(block.get("bins", 30)),
    )
    prov = ioutil.provenance(config, seed)
    out = pd.DataFrame(
        {
            "bin": np.arange(comparison.n_bins),
            "mean_predicted": comparison.bin_predicted,
            "mean_observed": comparison.bin_observed,
        }
    )
    ioutil.write_table(_out(args, "binned.csv"), out, prov)
    ioutil.write_json(
        _out(args, "validation.json"),
        {
            "pearson_binned": comparison.pearson_binned,
            "pearson_individual": comparison.pearson_individual,
        },
        prov,
    )
    return 0


def cmd_delays(args, config: dict) -> int:
    block = config.get("analyze", {})
    seed = _seed_from(args, config, block)
    fit = ioutil.fit_from_table(ioutil.read_table(args.fit))
    records = ioutil.frame_to_records(ioutil.read_table(args.observations))
    components, relative = delays_mod.end_to_end_delays(
        records,
        fit,
        group_label=block.get("group_label", "borough"),
        impute_missing=bool(block.get("impute_missing", False)),
    )
    prov = ioutil.provenance(config, seed)
    ioutil.write_table(_out(args, "delay_components.csv"), components, prov)
    ioutil.write_table(_out(args, "delay_relative.csv"), relative, prov)
    return 0


def cmd_contextualize(args, config: dict) -> int:
    block = _block(config, "analyze")
    seed = _seed_from(args, config, block)
    fit = ioutil.fit_from_table(ioutil.read_table(args.fit))
    stats = None
    if "standardization" in block:
        s = block["standardization"]
        stats = StandardizationStats(
            means={k: float(v) for k, v in need(s, "means", dict, "analyze.standardization").items()},
            sds={k: float(v) for k, v in need(s, "sds", dict, "analyze.standardization").items()},
            log_transformed=tuple(s.get("log_transformed", [])),
        )
    rows = []
    for i, p in enumerate(need(block, "profiles", list, "analyze")):
        where = f"analyze.profiles[{i}]"
        profile = delays_mod.CovariateProfile(
            covariates={
                k: float(v) for k, v in need(p, "covariates", dict, where).items()
            },
            factors={k: str(v) for k, v in need(p, "factors", dict, where).items()},
            stats=stats,
        )
        window = p.get("window_days")
        try:
            estimate = delays_mod.expected_delay(
                fit, profile, window=float(window) if window else None
            )
        except KeyError as exc:
            raise ConfigError(f"{where}: {exc.args[0]}") from None
        rows.append(
            {
                "profile": p.get("name", f"profile_{i}"),
                "rate_per_day": estimate.rate,
                "mean_delay_days": estimate.mean_delay,
                "conditional_mean_days": estimate.conditional_mean
                if estimate.conditional_mean is not None
                else math.nan,
            }
        )
    ioutil.write_table(
        _out(args, "delay_table.csv"),
        pd.DataFrame(rows),
        ioutil.provenance(config, seed),
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reportrates",
        description="Reporting-rate estimation from duplicate incident reports",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, **inputs):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        for flag, help_text in inputs.items():
            p.add_argument(f"--{flag}", required=True, help=help_text)

    common(sub.add_parser("simulate", help="generate ground-truth traces"))
    common(sub.add_parser("calibrate", help="search death rate for a duplicate fraction"))
    common(sub.add_parser("build", help="reports CSV -> observation records"),
           reports="raw reports CSV")
    common(sub.add_parser("fit", help="fit a rate regression"),
           observations="observations CSV")
    common(sub.add_parser("sample", help="posterior sampling cross-check"),
           observations="observations CSV")
    common(sub.add_parser("ppc", help="posterior predictive check"),
           observations="observations CSV", fit="coefficients CSV")
    common(sub.add_parser("validate", help="binned predicted-vs-observed delays"),
           delays="CSV with predicted,observed columns")
    common(sub.add_parser("delays", help="end-to-end delay decomposition"),
           observations="observations CSV", fit="coefficients CSV")
    common(sub.add_parser("contextualize", help="delay table for covariate profiles"),
           fit="coefficients CSV")
    return parser


_HANDLERS = {
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "build": cmd_build,
    "fit": cmd_fit,
    "sample": cmd_sample,
    "ppc": cmd_ppc,
    "validate": cmd_validate,
    "delays": cmd_delays,
    "contextualize": cmd_contextualize,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        return _HANDLERS[args.command](args, config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (fitting.EstimationError, simulate.CalibrationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
