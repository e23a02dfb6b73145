"""Shared fixtures: published coefficient table used by the delay analyses.

The zero-inflated fit on the street-tree data, with sum-zero category and
borough blocks, the inspection-condition factor relative to a "Poor"
reference folded into the intercept, and the risk score standardized with
the training-set mean 6.4915 and standard deviation 2.1788.
"""

import pytest

from reportrates import FitResult, StandardizationStats

BASE_COEFFICIENTS = {
    "intercept": -3.229,
    "condition[Poor]": 0.0,
    "condition[Dead]": -0.338,
    "condition[Fair]": -0.168,
    "condition[Good/Excellent]": -0.274,
    "risk_score": 0.240,
    "log_tree_diameter": -0.035,
    "borough[Bronx]": -0.051,
    "borough[Brooklyn]": -0.382,
    "borough[Manhattan]": 0.438,
    "borough[Queens]": -0.249,
    "borough[Staten Island]": 0.245,
    "category[Hazard]": 1.418,
    "category[Illegal Tree Damage]": 0.224,
    "category[Prune]": -0.087,
    "category[Remove Tree]": 0.034,
    "category[Root/Sewer/Sidewalk]": -1.589,
}

ZERO_INFLATION = 0.661

RISK_STATS = StandardizationStats(
    means={"risk_score": 6.4915}, sds={"risk_score": 2.1788}
)


@pytest.fixture(scope="session")
def base_fit() -> FitResult:
    return FitResult.from_coefficients(
        BASE_COEFFICIENTS, zero_inflation=ZERO_INFLATION
    )


@pytest.fixture(scope="session")
def risk_stats() -> StandardizationStats:
    return RISK_STATS
