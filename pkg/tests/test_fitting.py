import math

import numpy as np
import pytest
from scipy.special import expit

from reportrates import (
    EstimationError,
    FactorSpec,
    FitError,
    ModelSpec,
    ObservationRecord,
    PenaltySpec,
    SpatialGraph,
    fit_map,
    graph_penalty,
    laplace_intervals,
    mle_rate,
    naive_rate,
    poisson_loglik,
    zip_loglik,
)


def record(incident_id, m, exposure, covariates=None, labels=None):
    return ObservationRecord(
        incident_id, 0.0, exposure, m, covariates or {}, labels or {}
    )


def random_instance(rng, n=30, p=4):
    x = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    beta = rng.normal(scale=0.4, size=p)
    tau = rng.uniform(0.3, 4.0, size=n)
    m = rng.poisson(tau * np.exp(x @ beta))
    return x, beta, tau, m.astype(float)


class TestNaiveAndMle:
    def test_naive_zero_count(self):
        assert naive_rate(0, 300.0) == 0.0

    def test_naive_rejects_bad_window(self):
        with pytest.raises(ValueError):
            naive_rate(5, 0.0)

    def test_mle_trivial_ratio(self):
        records = [record("a", 2, 1.0), record("b", 4, 2.0), record("c", 0, 1.0)]
        assert mle_rate(records) == pytest.approx(1.5)

    def test_mle_zero_exposure_fails(self):
        with pytest.raises(EstimationError):
            mle_rate([])


class TestPoissonLoglik:
    def test_single_zero_count_record(self):
        # beta = 0, tau = 1, m = 0: contribution is -tau * exp(0) = -1
        value, grad, hess = poisson_loglik(
            np.zeros(1), np.ones((1, 1)), np.zeros(1), np.ones(1)
        )
        assert value == pytest.approx(-1.0)
        assert grad[0] == pytest.approx(-1.0)
        assert hess[0, 0] == pytest.approx(-1.0)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        eps = 1e-6
        for _ in range(100):
            x, beta, tau, m = random_instance(rng)
            _, grad, _ = poisson_loglik(beta, x, m, tau)
            for j in range(beta.size):
                e = np.zeros_like(beta)
                e[j] = eps
                up, _, _ = poisson_loglik(beta + e, x, m, tau)
                dn, _, _ = poisson_loglik(beta - e, x, m, tau)
                fd = (up - dn) / (2 * eps)
                assert abs(fd - grad[j]) / max(1.0, abs(grad[j])) < 1e-6

    def test_hessian_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        x, beta, tau, m = random_instance(rng)
        _, _, hess = poisson_loglik(beta, x, m, tau)
        eps = 1e-6
        for j in range(beta.size):
            e = np.zeros_like(beta)
            e[j] = eps
            _, gu, _ = poisson_loglik(beta + e, x, m, tau)
            _, gd, _ = poisson_loglik(beta - e, x, m, tau)
            assert np.allclose((gu - gd) / (2 * eps), hess[:, j], rtol=1e-5, atol=1e-7)

    def test_overflow_names_row(self):
        x = np.array([[1.0], [800.0]])
        with pytest.raises(Exception, match="row 1"):
            poisson_loglik(np.array([2.0]), x, np.zeros(2), np.ones(2))


class TestZipLoglik:
    def test_gamma_zero_reduces_to_poisson(self):
        rng = np.random.default_rng(12)
        x, beta, tau, m = random_instance(rng)
        zip_value, _ = zip_loglik(beta, 0.0, x, m, tau)
        poisson_value, _, _ = poisson_loglik(beta, x, m, tau)
        assert abs(zip_value - poisson_value) <= 1e-12 * max(1.0, abs(poisson_value))

    def test_gamma_near_one_with_positive_counts_diverges(self):
        x = np.ones((1, 1))
        values = [
            zip_loglik(np.zeros(1), g, x, np.array([2.0]), np.ones(1))[0]
            for g in (0.9, 0.999, 1 - 1e-9)
        ]
        assert values[0] > values[1] > values[2]
        assert values[2] < -20

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        eps = 1e-6
        for _ in range(100):
            x, beta, tau, m = random_instance(rng)
            gamma = float(rng.uniform(0.05, 0.9))
            m = np.where(rng.uniform(size=m.size) < gamma, 0.0, m)
            eta = math.log(gamma / (1 - gamma))
            _, grad = zip_loglik(beta, gamma, x, m, tau)
            for j in range(beta.size + 1):
                if j < beta.size:
                    e = np.zeros_like(beta)
                    e[j] = eps
                    up, _ = zip_loglik(beta + e, gamma, x, m, tau)
                    dn, _ = zip_loglik(beta - e, gamma, x, m, tau)
                else:
                    up, _ = zip_loglik(beta, expit(eta + eps), x, m, tau)
                    dn, _ = zip_loglik(beta, expit(eta - eps), x, m, tau)
                fd = (up - dn) / (2 * eps)
                assert abs(fd - grad[j]) / max(1.0, abs(grad[j])) < 1e-6

    def test_hessian_matches_finite_differences(self):
        rng = np.random.default_rng(14)
        x, beta, tau, m = random_instance(rng)
        m[: m.size // 2] = 0.0
        gamma = 0.4
        eta = math.log(gamma / (1 - gamma))
        _, _, hess = zip_loglik(beta, gamma, x, m, tau, hessian=True)
        eps = 1e-6

        def grad_at(b, e):
            return zip_loglik(b, expit(e), x, m, tau)[1]

        for j in range(beta.size + 1):
            if j < beta.size:
                step = np.zeros_like(beta)
                step[j] = eps
                fd = (grad_at(beta + step, eta) - grad_at(beta - step, eta)) / (2 * eps)
            else:
                fd = (grad_at(beta, eta + eps) - grad_at(beta, eta - eps)) / (2 * eps)
            assert np.allclose(fd, hess[:, j], rtol=1e-5, atol=1e-6)

    def test_simulate_and_refit_recovers_gamma(self):
        # zero-inflation 0.661 as in the published fit; n = 50,000
        rng = np.random.default_rng(15)
        n = 50_000
        gamma = 0.661
        x = rng.normal(size=n)
        tau = rng.uniform(1.0, 20.0, size=n)
        rate = np.exp(-0.5 + 0.3 * x)
        m = rng.poisson(rate * tau)
        m[rng.uniform(size=n) < gamma] = 0
        records = [
            record(f"i{k}", int(m[k]), float(tau[k]), {"x": float(x[k])})
            for k in range(n)
        ]
        spec = ModelSpec(covariates=("x",), zero_inflation=True, prior_scales=None)
        fit = fit_map(spec, records)
        assert abs(fit.zero_inflation - gamma) < 0.02


class TestGraphPenalty:
    def test_constant_coefficients_zero(self):
        g = SpatialGraph.path(["a", "b", "c"])
        value, grad = graph_penalty([2.0, 2.0, 2.0], PenaltySpec("f", g))
        assert value == 0.0
        assert np.allclose(grad, 0.0)

    def test_single_edge_weight_five(self):
        g = SpatialGraph.path(["a", "b"])
        value, _ = graph_penalty([0.0, 1.0], PenaltySpec("f", g, weight=5.0))
        assert value == pytest.approx(-5.0)

    def test_matches_edge_loop_oracle(self):
        rng = np.random.default_rng(16)
        labels = [f"n{k}" for k in range(12)]
        edges = []
        for a in range(12):
            for b in range(a + 1, 12):
                if rng.uniform() < 0.3:
                    edges.append((labels[a], labels[b]))
        g = SpatialGraph(tuple(labels), tuple(edges))
        beta = rng.normal(size=12)
        penalty = PenaltySpec("f", g, weight=3.5)
        value, grad = graph_penalty(beta, penalty, labels)

        oracle = -3.5 * sum(
            (beta[labels.index(a)] - beta[labels.index(b)]) ** 2 for a, b in edges
        )
        assert abs(value - oracle) < 1e-12

        eps = 1e-7
        for j in range(12):
            e = np.zeros(12)
            e[j] = eps
            fd = (
                graph_penalty(beta + e, penalty, labels)[0]
                - graph_penalty(beta - e, penalty, labels)[0]
            ) / (2 * eps)
            assert abs(fd - grad[j]) / max(1.0, abs(grad[j])) < 1e-6

    def test_shift_invariance(self):
        rng = np.random.default_rng(17)
        g = SpatialGraph.path([f"n{k}" for k in range(6)])
        beta = rng.normal(size=6)
        penalty = PenaltySpec("f", g)
        v1, _ = graph_penalty(beta, penalty)
        v2, _ = graph_penalty(beta + 13.7, penalty)
        assert abs(v1 - v2) < 1e-12


class TestFitMap:
    def test_intercept_only_equals_pooled_mle(self):
        records = [record("a", 2, 1.0), record("b", 4, 2.0), record("c", 0, 1.0)]
        fit = fit_map(ModelSpec(prior_scales=None), records)
        assert fit.coefficient("intercept") == pytest.approx(math.log(1.5), abs=1e-8)
        assert math.exp(fit.coefficient("intercept")) == pytest.approx(
            mle_rate(records), abs=1e-8
        )

    def test_shift_invariance_motivates_sum_zero(self):
        # adding c to every level coefficient and subtracting c from the
        # intercept leaves the likelihood unchanged on the one-hot design
        rng = np.random.default_rng(18)
        n, k = 40, 3
        levels = rng.integers(0, k, size=n)
        x_full = np.zeros((n, 1 + k))
        x_full[:, 0] = 1.0
        x_full[np.arange(n), 1 + levels] = 1.0
        tau = rng.uniform(0.5, 2.0, size=n)
        m = rng.poisson(tau).astype(float)
        beta = rng.normal(size=1 + k)
        shift = np.concatenate([[-0.8], np.full(k, 0.8)])
        v1, _, _ = poisson_loglik(beta, x_full, m, tau)
        v2, _, _ = poisson_loglik(beta + shift, x_full, m, tau)
        assert abs(v1 - v2) < 1e-9

    def test_sum_zero_fit_recovers_level_contrasts(self):
        rng = np.random.default_rng(19)
        true = {"u": 0.6, "v": -0.2, "w": -0.4}
        records = []
        for k in range(6000):
            lev = ["u", "v", "w"][k % 3]
            tau = float(rng.uniform(0.5, 3.0))
            m = rng.poisson(tau * math.exp(-0.3 + true[lev]))
            records.append(record(f"i{k}", int(m), tau, labels={"g": lev}))
        spec = ModelSpec(factors=(FactorSpec("g"),), prior_scales=None)
        fit = fit_map(spec, records)
        level_coefs = [fit.coefficient(f"g[{lev}]") for lev in ("u", "v", "w")]
        assert abs(sum(level_coefs)) < 1e-8
        for lev, coef in zip(("u", "v", "w"), level_coefs):
            assert coef == pytest.approx(true[lev], abs=0.08)

    def test_log_posterior_improves_from_start(self):
        rng = np.random.default_rng(20)
        records = [
            record(f"i{k}", int(rng.poisson(1.0)), float(rng.uniform(0.5, 2)),
                   {"x": float(rng.normal())})
            for k in range(200)
        ]
        spec = ModelSpec(covariates=("x",))
        init = np.array([2.0, -1.5])
        fit = fit_map(spec, records, init=init)
        from reportrates.design import assemble_design
        from reportrates.fitting import _Posterior

        x, info = assemble_design(records, spec)
        post = _Posterior(
            x,
            np.array([r.duplicate_count for r in records], dtype=float),
            np.array([r.exposure for r in records]),
            info,
            spec,
        )
        assert fit.log_posterior >= post.value(init)

    def test_strong_penalty_ties_levels_together(self):
        rng = np.random.default_rng(21)
        records = []
        for k in range(400):
            lev = "a" if k % 2 == 0 else "b"
            rate = 2.0 if lev == "a" else 0.5
            tau = float(rng.uniform(0.5, 2.0))
            records.append(
                record(f"i{k}", int(rng.poisson(rate * tau)), tau, labels={"g": lev})
            )
        graph = SpatialGraph.path(["a", "b"])
        spec = ModelSpec(
            factors=(FactorSpec("g"),),
            penalties=(PenaltySpec("g", graph, weight=1e8),),
            prior_scales=None,
        )
        fit = fit_map(spec, records)
        assert abs(fit.coefficient("g[a]") - fit.coefficient("g[b]")) < 1e-3

    def test_all_positive_counts_drive_gamma_to_zero(self):
        rng = np.random.default_rng(22)
        records = [
            record(f"i{k}", int(1 + rng.poisson(1.5)), float(rng.uniform(1, 3)))
            for k in range(300)
        ]
        spec = ModelSpec(zero_inflation=True, prior_scales=None)
        fit = fit_map(spec, records)
        assert fit.zero_inflation < 1e-4

    def test_non_convergence_carries_state(self):
        rng = np.random.default_rng(23)
        records = [
            record(f"i{k}", int(rng.poisson(2.0)), 1.0, {"x": float(rng.normal())})
            for k in range(100)
        ]
        with pytest.raises(FitError) as info:
            fit_map(ModelSpec(covariates=("x",)), records, max_iter=1)
        assert info.value.last_params is not None
        assert info.value.gradient_norm > 0

    def test_more_coefficients_than_records_rejected(self):
        records = [record("a", 1, 1.0, {"x": 0.1, "y": 0.2})]
        with pytest.raises(EstimationError):
            fit_map(ModelSpec(covariates=("x", "y")), records)


class TestLaplaceIntervals:
    def test_homogeneous_fisher_information(self):
        # intercept-only Poisson: sd of log-rate is 1 / sqrt(total count)
        rng = np.random.default_rng(24)
        records = [
            record(f"i{k}", int(rng.poisson(3.0)), 1.0) for k in range(2000)
        ]
        fit = laplace_intervals(fit_map(ModelSpec(prior_scales=None), records))
        total = sum(r.duplicate_count for r in records)
        assert fit.sd[0] == pytest.approx(1.0 / math.sqrt(total), rel=0.05)

    def test_balanced_two_level_factor_sds_equal(self):
        rng = np.random.default_rng(25)
        records = []
        for k in range(500):
            lev = "u" if k % 2 == 0 else "v"
            records.append(record(f"i{k}", int(rng.poisson(2.0)), 1.0, labels={"g": lev}))
        fit = laplace_intervals(
            fit_map(ModelSpec(factors=(FactorSpec("g"),), prior_scales=None), records)
        )
        names = list(fit.names)
        sd_u = fit.sd[names.index("g[u]")]
        sd_v = fit.sd[names.index("g[v]")]
        assert sd_u == pytest.approx(sd_v, rel=1e-6)

    def test_intervals_bracket_estimates(self):
        rng = np.random.default_rng(26)
        records = [
            record(f"i{k}", int(rng.poisson(1.0)), 1.0, {"x": float(rng.normal())})
            for k in range(400)
        ]
        fit = laplace_intervals(fit_map(ModelSpec(covariates=("x",)), records))
        assert np.all(fit.q025 <= fit.estimates)
        assert np.all(fit.estimates <= fit.q975)

    def test_zero_inflation_interval_brackets_gamma(self):
        rng = np.random.default_rng(27)
        records = []
        for k in range(800):
            m = 0 if rng.uniform() < 0.4 else int(rng.poisson(2.0))
            records.append(record(f"i{k}", m, 1.0))
        fit = laplace_intervals(
            fit_map(ModelSpec(zero_inflation=True, prior_scales=None), records)
        )
        lo, hi = fit.zero_inflation_interval
        assert 0.0 < lo < fit.zero_inflation < hi < 1.0
