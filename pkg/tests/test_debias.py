import numpy as np
import pytest

from fgray.censoring import build_risk_grid, km_censoring
from fgray.debias import (
    cv_nodewise_lambdas,
    nodewise_precision,
    nodewise_regression,
    one_step_estimate,
)
from fgray.errors import NumericError
from fgray.pseudolik import RiskSetKernel, score_contributions
from fgray.solver import fit_fine_gray_lasso
from fgray.simulate import CensoringSpec, IndependentDesign, generate

from oracles import newton_mple, random_dataset


def xi_of(rng, n=60, p=6, beta_scale=0.2):
    d = random_dataset(rng, n=n, p=p)
    g = build_risk_grid(d, km_censoring(d))
    beta = rng.standard_normal(p) * beta_scale
    return d, g, score_contributions(d, g, beta)


class TestNodewiseRegression:
    def test_zero_when_penalty_dominates(self, rng):
        _, _, xi = xi_of(rng)
        G = xi.information()
        lam = 1.01 * np.max(np.abs(np.delete(G[2], 2)))
        fit = nodewise_regression(xi, 2, lam)
        np.testing.assert_array_equal(fit.gamma, 0.0)
        assert fit.tau_sq == pytest.approx(G[2, 2], rel=1e-12)

    def test_two_columns_closed_form(self, rng):
        # with p = 2 the regression is a scalar soft-threshold
        _, _, xi = xi_of(rng, p=2)
        G = xi.information()
        lam = 0.03
        fit = nodewise_regression(xi, 0, lam)
        rho = G[0, 1]
        expect = np.sign(rho) * max(abs(rho) - lam, 0.0) / G[1, 1]
        np.testing.assert_allclose(fit.gamma, [expect], atol=1e-10)

    def test_tau_sq_matches_direct_recomputation(self, rng):
        for _ in range(5):
            _, _, xi = xi_of(rng, n=50, p=5)
            lam = 0.02
            fit = nodewise_regression(xi, 3, lam)
            others = np.delete(np.arange(5), 3)
            resid = xi.rows[:, 3] - xi.rows[:, others] @ fit.gamma
            direct = resid @ resid / xi.n + lam * np.abs(fit.gamma).sum()
            assert fit.tau_sq == pytest.approx(direct, rel=1e-12, abs=1e-12)

    def test_degenerate_column_raises(self, rng):
        d = random_dataset(rng, n=40, p=3)
        g = build_risk_grid(d, km_censoring(d))
        xi = score_contributions(d, g, np.zeros(3))
        xi.rows[:, 2] = xi.rows[:, 0]      # perfectly explained column
        xi._gram = None
        with pytest.raises(NumericError, match="degenerate"):
            nodewise_regression(xi, 2, 0.0)


class TestPrecisionEstimate:
    def test_p_equals_one_scalar_inverse(self, rng):
        d, g, _ = xi_of(rng, p=1)
        xi = score_contributions(d, g, np.zeros(1))
        prec = nodewise_precision(xi, lambdas=0.0)
        expect = 1.0 / (xi.rows[:, 0] @ xi.rows[:, 0] / xi.n)
        np.testing.assert_allclose(prec.rows, [[expect]], rtol=1e-12)

    def test_diag_identity_and_kkt_bound(self, rng):
        _, _, xi = xi_of(rng, n=80, p=8)
        prec = nodewise_precision(xi, lambdas="cv", seed=1)
        prod = prec.rows @ xi.information()
        np.testing.assert_allclose(np.diag(prod), 1.0, atol=1e-8)
        off = np.abs(prod - np.diag(np.diag(prod))).max(axis=1)
        assert np.all(off <= prec.lambdas / prec.tau_sq + 1e-8)

    def test_lambda_zero_matches_dense_inverse(self, rng):
        # n > p and a well-conditioned second moment: the rows recover
        # the plain matrix inverse
        _, _, xi = xi_of(rng, n=150, p=6)
        prec = nodewise_precision(xi, lambdas=0.0)
        expect = np.linalg.inv(xi.information())
        np.testing.assert_allclose(prec.rows, expect, atol=1e-6)

    def test_sign_and_shift_layout(self, rng):
        # row assembly: (-gamma_{j,<j}, 1, -gamma_{j,>=j}) / tau^2
        _, _, xi = xi_of(rng, n=70, p=5)
        lam = 0.02
        prec = nodewise_precision(xi, lambdas=lam)
        for j in range(5):
            fit = nodewise_regression(xi, j, lam)
            expect = np.insert(-fit.gamma, j, 1.0) / fit.tau_sq
            np.testing.assert_allclose(prec.rows[j], expect, rtol=1e-9, atol=1e-11)
            assert prec.rows[j][j] == pytest.approx(1.0 / fit.tau_sq, rel=1e-12)

    def test_row_subset(self, rng):
        _, _, xi = xi_of(rng, n=60, p=7)
        rows = np.array([1, 4])
        prec = nodewise_precision(xi, lambdas=0.05, rows=rows)
        full = nodewise_precision(xi, lambdas=0.05)
        np.testing.assert_allclose(prec.rows[0], full.rows[1], atol=1e-12)
        np.testing.assert_allclose(prec.rows[1], full.rows[4], atol=1e-12)
        assert not prec.is_full
        with pytest.raises(KeyError):
            prec.row_position(2)

    def test_per_row_cv_lambdas_are_on_each_grid(self, rng):
        _, _, xi = xi_of(rng, n=60, p=6)
        lams = cv_nodewise_lambdas(xi, np.arange(6), seed=3)
        assert lams.shape == (6,)
        assert np.all(lams > 0)


class TestOneStep:
    def test_zero_score_returns_initial(self, rng):
        _, _, xi = xi_of(rng, n=60, p=4)
        prec = nodewise_precision(xi, lambdas=0.05)
        beta = rng.standard_normal(4)
        est = one_step_estimate(beta, prec, np.zeros(4))
        np.testing.assert_array_equal(est.b, beta)

    def test_linear_update_identity(self, rng):
        _, _, xi = xi_of(rng, n=60, p=4)
        prec = nodewise_precision(xi, lambdas=0.05)
        beta = rng.standard_normal(4)
        s = rng.standard_normal(4) * 0.01
        est = one_step_estimate(beta, prec, s)
        np.testing.assert_allclose(est.b, beta + prec.rows @ s, atol=1e-14)

    def test_newton_step_equivalence_low_dim(self):
        # with the exact inverse curvature, the correction is one
        # Newton step; iterated to convergence it is the unpenalized
        # maximizer
        design = IndependentDesign(
            n=200, p=2, beta1=np.array([0.4, -0.2]),
            beta2=np.array([0.2, 0.2]),
            censoring=CensoringSpec(kind="uniform", param=3.0),
        )
        d = generate(design, seed=9)
        g = build_risk_grid(d, km_censoring(d))
        kern = RiskSetKernel(d, g)

        beta0 = np.array([0.1, 0.1])
        state = kern.state(beta0)
        H = kern.neg_hessian(state)
        s = kern.score(state)
        from fgray.debias import PrecisionEstimate

        prec = PrecisionEstimate(
            rows=np.linalg.inv(H), row_indices=np.arange(2),
            tau_sq=1 / np.diag(H), lambdas=np.zeros(2),
            kkt_residuals=np.zeros(2), offdiag_max=np.zeros(2),
            offdiag_bound=np.zeros(2), diag_err=np.zeros(2),
        )
        est = one_step_estimate(beta0, prec, s)
        newton = beta0 + np.linalg.solve(H, s)
        np.testing.assert_allclose(est.b, newton, atol=1e-10)

        beta = beta0
        for _ in range(40):
            st = kern.state(beta)
            beta = beta + np.linalg.solve(kern.neg_hessian(st), kern.score(st))
        np.testing.assert_allclose(beta, newton_mple(d), atol=1e-6)

    def test_partial_rows_only_update_computed_coordinates(self, rng):
        _, _, xi = xi_of(rng, n=60, p=5)
        prec = nodewise_precision(xi, lambdas=0.05, rows=np.array([2]))
        beta = rng.standard_normal(5)
        s = rng.standard_normal(5) * 0.01
        est = one_step_estimate(beta, prec, s)
        changed = est.b != beta
        assert changed.tolist() == [False, False, True, False, False]


class TestDebiasOnSignal:
    def test_bias_reduction_on_signal_coordinate(self, rng):
        # over replicates, the corrected estimate of a true signal
        # coordinate is closer to the truth than the penalized one
        design = IndependentDesign(
            n=120, p=40, censoring=CensoringSpec(kind="uniform", param=3.0)
        )
        init_err, corrected_err = [], []
        for seed in range(12):
            d = generate(design, seed=seed)
            g = build_risk_grid(d, km_censoring(d))
            kern = RiskSetKernel(d, g)
            fit = fit_fine_gray_lasso(d, g, 0.12, kernel=kern)
            xi = score_contributions(d, g, fit.beta)
            prec = nodewise_precision(xi, lambdas="cv", seed=seed)
            est = one_step_estimate(
                fit.beta, prec, kern.score(kern.state(fit.beta))
            )
            init_err.append(fit.beta[0])
            corrected_err.append(est.b[0])
        bias_init = abs(np.mean(init_err) - 0.5)
        bias_corr = abs(np.mean(corrected_err) - 0.5)
        assert bias_corr < bias_init
