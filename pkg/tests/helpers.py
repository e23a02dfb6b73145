"""Shared fixtures and CLI runner for the test suite."""

import json
import math

import pandas as pd

from reportrates.cli import main

# 10 raw reports: incident A has a repeat caller (r2 repeats r1's phone),
# incident B's inspection precedes its first report. Expected windows by
# hand: A 4 days (1 duplicate), C 100 days (1 duplicate), D 10 days,
# E 5 days (2 duplicates).
REPORTS_CSV = """\
report_id,incident_id,created_ts,category,borough,tract_id,first_name,last_name,phone,email,inspection_ts,workorder_ts,closed_ts,risk
r1,A,2020-01-01T00:00:00,Hazard,Queens,t1,ann,ames,p1,,2020-01-05T00:00:00,,2020-01-06T00:00:00,7
r2,A,2020-01-02T00:00:00,Hazard,Queens,t1,bob,bly,p1,,2020-01-05T00:00:00,,,5
r3,A,2020-01-03T00:00:00,Prune,Queens,t1,cal,cole,,,2020-01-05T00:00:00,,,5
r4,B,2020-01-10T00:00:00,Hazard,Bronx,t2,dee,dun,,,2020-01-08T00:00:00,,,6
r5,C,2020-02-01T00:00:00,Prune,Queens,t3,eva,elle,,,,,,4
r6,C,2020-02-03T00:00:00,Prune,Queens,t3,fay,fox,,,,,,4
r7,D,2020-03-01T00:00:00,Hazard,Bronx,t4,gil,gray,,,2020-03-11T00:00:00,,2020-03-04T00:00:00,8
r8,E,2020-04-01T00:00:00,Hazard,Queens,t5,hal,hart,,,,2020-04-06T00:00:00,,9
r9,E,2020-04-02T00:00:00,Hazard,Queens,t5,ida,ives,,,,2020-04-06T00:00:00,,9
r10,E,2020-04-03T00:00:00,Hazard,Queens,t5,joe,jett,,,,2020-04-06T00:00:00,,9
"""

PAPER_FIT_ROWS = [
    {"name": "intercept", "mean": -3.229},
    {"name": "condition[Poor]", "mean": 0.0},
    {"name": "condition[Dead]", "mean": -0.338},
    {"name": "condition[Fair]", "mean": -0.168},
    {"name": "condition[Good/Excellent]", "mean": -0.274},
    {"name": "risk_score", "mean": 0.240},
    {"name": "log_tree_diameter", "mean": -0.035},
    {"name": "borough[Bronx]", "mean": -0.051},
    {"name": "borough[Brooklyn]", "mean": -0.382},
    {"name": "borough[Manhattan]", "mean": 0.438},
    {"name": "borough[Queens]", "mean": -0.249},
    {"name": "borough[Staten Island]", "mean": 0.245},
    {"name": "category[Hazard]", "mean": 1.418},
    {"name": "category[Illegal Tree Damage]", "mean": 0.224},
    {"name": "category[Prune]", "mean": -0.087},
    {"name": "category[Remove Tree]", "mean": 0.034},
    {"name": "category[Root/Sewer/Sidewalk]", "mean": -1.589},
    {"name": "zero_inflation", "mean": 0.661},
]

SIM_BLOCK = {
    "types": [
        {
            "index": 0,
            "covariates": [0.0, 0.0],
            "incident_log_rate": math.log(5.0),
            "report_log_rate": math.log(2.0),
            "death_base_rate": 0.065,
            "death_scale": 100.0,
        }
    ],
    "horizon_days": 300.0,
    "replicates": 6,
}


def run(tmp_path, command, config, *flags, seed=None):
    """Invoke one CLI command with a config dict; returns (exit code, out dir)."""
    tmp_path.mkdir(parents=True, exist_ok=True)
    config_path = tmp_path / f"{command}_config.json"
    config_path.write_text(json.dumps(config))
    out = tmp_path / f"out_{command}"
    argv = [command, "--config", str(config_path), "--out", str(out), *flags]
    if seed is not None:
        argv += ["--seed", str(seed)]
    code = main(argv)
    return code, out


def paper_fit_csv(tmp_path):
    tmp_path.mkdir(parents=True, exist_ok=True)
    path = tmp_path / "paper_fit.csv"
    pd.DataFrame(PAPER_FIT_ROWS).to_csv(path, index=False)
    return path


def delay_profile(name, category, borough, condition, risk):
    return {
        "name": name,
        "covariates": {"risk_score": risk, "log_tree_diameter": 0.0},
        "factors": {"category": category, "borough": borough, "condition": condition},
    }
