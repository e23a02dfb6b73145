"""Deterministic file I/O with provenance headers.

Every output file starts with a provenance line (tool version, seed, config
hash) and contains nothing time- or machine-dependent, so re-running a
command with the same inputs yields byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math
from importlib import metadata
from pathlib import Path

import pandas as pd

from .intervals import ObservationRecord

__all__ = [
    "tool_version",
    "config_hash",
    "provenance",
    "write_table",
    "read_table",
    "write_json",
    "read_json",
    "records_to_frame",
    "frame_to_records",
    "fit_from_table",
]

FLOAT_FORMAT = "%.12g"


def tool_version() -> str:
    try:
        return metadata.version("reportrates")
    except metadata.PackageNotFoundError:
        return "0.0.0"


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def provenance(config: dict, seed) -> dict:
    return {
        "tool": f"reportrates {tool_version()}",
        "config_hash": config_hash(config),
        "seed": seed,
    }


def _provenance_line(prov: dict) -> str:
    parts = [str(prov.get("tool", "reportrates"))]
    for key in sorted(k for k in prov if k != "tool"):
        parts.append(f"{key}={prov[key]}")
    return "# " + " ".join(parts) + "\n"


def write_table(path, frame: pd.DataFrame, prov: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        handle.write(_provenance_line(prov))
        frame.to_csv(
            handle, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
        )


def read_table(path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def write_json(path, payload: dict, prov: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"_provenance": prov, **payload}
    with open(path, "w") as handle:
        json.dump(body, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_json(path) -> dict:
    with open(path) as handle:
        return json.load(handle)


def records_to_frame(records) -> pd.DataFrame:
    """Observation records -> flat table with cov_/label_ prefixed columns."""
    cov_names = sorted({k for r in records for k in r.covariates})
    label_names = sorted({k for r in records for k in r.labels})
    rows = []
    for r in records:
        row = {
            "incident_id": r.incident_id,
            "s": r.start,
            "e": r.end,
            "exposure_days": r.exposure,
            "m_tilde": r.duplicate_count,
        }
        for name in cov_names:
            row[f"cov_{name}"] = r.covariates.get(name, math.nan)
        for name in label_names:
            row[f"label_{name}"] = r.labels.get(name, "")
        row["inspection_days"] = (
            r.inspection if r.inspection is not None else math.nan
        )
        row["workorder_days"] = (
            r.workorder if r.workorder is not None else math.nan
        )
        rows.append(row)
    return pd.DataFrame(rows)


def frame_to_records(frame: pd.DataFrame) -> list[ObservationRecord]:
    cov_cols = [c for c in frame.columns if c.startswith("cov_")]
    label_cols = [c for c in frame.columns if c.startswith("label_")]
    records = []
    for data in frame.to_dict("records"):
        inspection = data.get("inspection_days", math.nan)
        workorder = data.get("workorder_days", math.nan)
        records.append(
            ObservationRecord(
                incident_id=str(data["incident_id"]),
                start=float(data["s"]),
                end=float(data["e"]),
                duplicate_count=int(data["m_tilde"]),
                covariates={c[4:]: float(data[c]) for c in cov_cols},
                labels={c[6:]: str(data[c]) for c in label_cols},
                inspection=None if pd.isna(inspection) else float(inspection),
                workorder=None if pd.isna(workorder) else float(workorder),
            )
        )
    return records


def fit_from_table(frame: pd.DataFrame):
    """Coefficient table (name, mean, ...) -> a scoring-only fit object."""
    from .fitting import FitResult

    mapping = {}
    gamma = None
    for row in frame.itertuples(index=False):
        name = str(row.name)
        if name == "zero_inflation":
            gamma = float(row.mean)
        else:
            mapping[name] = float(row.mean)
    return FitResult.from_coefficients(mapping, zero_inflation=gamma)
