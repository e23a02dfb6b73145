"""Why duplicate reports identify the reporting rate.

Five incident types share the same reporting rate (2 per day) but occur at
different rates (1 to 5 per day). An estimator that just counts what arrives
tracks the incident rate; counting duplicates inside valid observation
windows recovers the shared reporting rate; and ending the window at the
last report (which peeks at the future) inflates the estimate badly.

Run:  python demos/01_identification_experiment.py
"""

import math

import numpy as np

import reportrates as rr

REPLICATES = 30
HORIZON = 300.0
SEED = 20260810

# covariate placement: the log incident rate is theta1 + theta2, with the
# rarest type near the covariate centroid so pooling helps it most
offsets = [0.0, 1.5, -0.5, 2.0, 0.5]
types = tuple(
    rr.TypeSpec(
        index=t,
        covariates=(offsets[t], math.log(t + 1.0) - offsets[t]),
        incident_log_rate=math.log(t + 1.0),
        report_log_rate=math.log(2.0),
        death_base_rate=0.065,
        death_scale=100.0,
    )
    for t in range(5)
)
config = rr.SimConfig(types=types, horizon=HORIZON, seed=SEED, replicates=REPLICATES)
spec = rr.ModelSpec(covariates=("theta1", "theta2"), prior_scales=None)

rows = {name: {t: [] for t in range(5)} for name in
        ("naive", "mle", "mle_last_report", "regression")}

for rep, traces in rr.iterate_replicates(config):
    records = rr.records_from_traces(traces, types, HORIZON, "death")
    fit = rr.fit_map(spec, records)
    for t in range(5):
        own = [tr for tr in traces if tr.type_index == t]
        rows["naive"][t].append(
            rr.naive_rate(sum(tr.total_reports for tr in own), HORIZON)
        )
        rows["mle"][t].append(
            rr.mle_rate(rr.records_from_traces(own, types, HORIZON, "death"))
        )
        rows["mle_last_report"][t].append(
            rr.mle_rate(rr.records_from_traces(own, types, HORIZON, "last_report"))
        )
        linpred = (
            fit.coefficient("intercept")
            + fit.coefficient("theta1") * types[t].covariates[0]
            + fit.coefficient("theta2") * types[t].covariates[1]
        )
        rows["regression"][t].append(math.exp(linpred))

print(f"true reporting rate: 2.0 for every type; {REPLICATES} replicates\n")
header = "incident rate        " + "".join(f"{t + 1:>14}" for t in range(5))
print(header)
print("-" * len(header))
for name, label in [
    ("naive", "reports per day"),
    ("mle", "duplicate MLE"),
    ("mle_last_report", "MLE, bad window"),
    ("regression", "pooled regression"),
]:
    cells = "".join(
        f"  {np.mean(rows[name][t]):6.3f}({np.std(rows[name][t]):.3f})"
        for t in range(5)
    )
    print(f"{label:<21}{cells}")

print(
    "\nThe naive row scales with the incident rate (it cannot separate"
    "\noccurrence from reporting); both duplicate-based rows with valid"
    "\nwindows sit at 2.0; the last-report window is biased upward ~4x;"
    "\nthe pooled regression has the smallest spread at rare types."
)
