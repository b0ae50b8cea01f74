import numpy as np
import pytest

from adaridge import (
    Dataset,
    FitOptions,
    Hyper,
    em_step,
    em_step_explicit_sigma,
    fit_em,
    fit_joint_mode,
    fit_ols,
    standardize,
)
from adaridge.errors import ZeroCoordinate
from conftest import random_instance, toeplitz_design


class TestEmStep:
    def test_flat_prior_is_ols_in_one_step(self, rng):
        x, y = toeplitz_design(40, [1.0, 0.0, -2.0], 1.0, rng)
        data, _ = standardize(x, y)
        beta = em_step(data, np.array([1.0, 1.0, 1.0]), Hyper(-1.5))
        np.testing.assert_allclose(beta, fit_ols(data), atol=1e-10)

    def test_scalar_step_value(self):
        # p = 1, x'x = 1, x'y = 1, previous beta = 1, eta = -1.  The
        # implied ridge weight is S^2 / ((n + 2) beta^2); with S^2 = n
        # exactly this gives beta_next = (n + 2) / (2 n + 2).
        n = 4
        x = np.zeros((n, 1))
        x[0, 0] = 1.0
        y = np.zeros(n)
        y[0] = 1.0
        # choose y so that x'y = 1 and the residual sum at beta_prev = 1
        # equals n: residuals are (1 - 1, y_2, ..., y_n)
        y[1:] = np.sqrt(n / (n - 1))
        data = Dataset(x, y)
        beta = em_step(data, np.array([1.0]), Hyper(-1.0))
        assert beta[0] == pytest.approx((n + 2) / (2 * n + 2), abs=1e-12)

    def test_zero_coordinate_rejected(self, rng):
        x, y = toeplitz_design(20, [1.0, 1.0], 1.0, rng)
        data, _ = standardize(x, y)
        with pytest.raises(ZeroCoordinate):
            em_step(data, np.array([1.0, 0.0]), Hyper(0.0))

    def test_step_decreases_previous_weighted_objective(self):
        # the step is the exact minimizer of the convex surrogate built
        # from the previous iterate, so the surrogate cannot increase
        for seed in range(10):
            data, _, _ = random_instance(seed)
            rng = np.random.default_rng(seed + 1)
            h = Hyper(-1.0)
            beta_prev = rng.standard_normal(data.p) + 2.0
            r = data.y - data.x @ beta_prev
            s2 = float(r @ r)
            d = (2 * h.eta + 3) * s2 / ((data.n + 2) * beta_prev**2)

            def objective(b):
                rr = data.y - data.x @ b
                return float(rr @ rr + np.sum(d * b**2))

            beta_next = em_step(data, beta_prev, h)
            assert objective(beta_next) <= objective(beta_prev) + 1e-12


class TestEmStepExplicitSigma:
    def test_boundary_is_ols(self, rng):
        x, y = toeplitz_design(30, [2.0, 0.0], 1.0, rng)
        data, _ = standardize(x, y)
        beta, s2 = em_step_explicit_sigma(data, np.ones(2), 1.0, Hyper(-0.5))
        ols = fit_ols(data)
        np.testing.assert_allclose(beta, ols, atol=1e-10)
        r = data.y - data.x @ ols
        assert s2 == pytest.approx(float(r @ r) / (data.n + 2), rel=1e-12)

    def test_penalty_is_inverse_squared_t_statistic(self, rng):
        # the ridge weight equals (2 eta + 1) / t_j^2 with t_j = beta_j / sigma
        data, _, _ = random_instance(5)
        h = Hyper(0.7)
        beta_prev = np.abs(np.random.default_rng(5).standard_normal(data.p)) + 0.5
        sigma2 = 1.9
        d = (2 * h.eta + 1) * sigma2 / beta_prev**2
        t = beta_prev / np.sqrt(sigma2)
        np.testing.assert_allclose(d, (2 * h.eta + 1) / t**2, rtol=1e-12)

    def test_fixed_point_satisfies_both_equations(self):
        data, _, _ = random_instance(9)
        opts = FitOptions(conv_tol=1e-13)
        emf = fit_em(data, Hyper(0.4), opts, variant="explicit-sigma")
        assert emf.converged
        idx = np.where(emf.active)[0]
        sub = Dataset(data.x[:, idx], data.y)
        beta = emf.beta[idx]
        r = data.y - sub.x @ beta
        sigma2 = float(r @ r) / (data.n + 2)
        beta_again, sigma2_again = em_step_explicit_sigma(sub, beta, sigma2, Hyper(0.4))
        np.testing.assert_allclose(beta_again, beta, atol=1e-8)
        assert sigma2_again == pytest.approx(sigma2, rel=1e-8)


class TestFitEm:
    def test_flat_prior_fit_is_ols(self, rng):
        x, y = toeplitz_design(50, [1.0, 0.0, 3.0], 1.0, rng)
        data, _ = standardize(x, y)
        emf = fit_em(data, Hyper(-1.5))
        np.testing.assert_allclose(emf.beta, fit_ols(data), atol=1e-10)
        assert emf.converged and emf.iterations == 1

    def test_zero_absorption_from_initializer(self):
        # an initializer coordinate that is exactly zero stays zero
        x = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
        y = np.array([3.0, 0.0, 1.0, -1.0])
        data = Dataset(x, y)  # least squares = (3, 0) exactly
        emf = fit_em(data, Hyper(-1.0))
        assert emf.beta[1] == 0.0
        assert not emf.active[1]

    def test_matches_joint_mode_at_shifted_eta(self):
        # marginal mode at eta = -1 coincides with the joint mode at
        # eta = 0 (same fixed point under the conditional-mode plug-in)
        for seed in range(10):
            data, _, _ = random_instance(seed)
            opts = FitOptions(conv_tol=1e-12)
            emf = fit_em(data, Hyper(-1.0), opts)
            joint = fit_joint_mode(data, Hyper(0.0), opts)
            np.testing.assert_allclose(emf.beta, joint.state.beta, atol=1e-6)

    def test_explicit_sigma_matches_joint_at_same_eta(self):
        # with the variance kept explicit the two routes share a fixed
        # point at equal eta; a sharp cross-check of both solvers
        for seed in range(10):
            data, _, _ = random_instance(seed)
            opts = FitOptions(conv_tol=1e-13)
            emf = fit_em(data, Hyper(0.0), opts, variant="explicit-sigma")
            joint = fit_joint_mode(data, Hyper(0.0), opts)
            np.testing.assert_allclose(emf.beta, joint.state.beta, atol=1e-8)

    def test_sparse_design_selects_single_signal(self):
        hits = 0
        for rep in range(50):
            rng = np.random.default_rng([7, rep])
            x, y = toeplitz_design(100, [5.0, 0, 0, 0, 0, 0, 0, 0], 3.0, rng)
            data, _ = standardize(x, y)
            emf = fit_em(data, Hyper(-1.0))
            if emf.active[0] and not emf.active[1:].any():
                hits += 1
        # equivalence with the joint mode at eta = 0 puts this near the
        # ~0.72 exact-recovery rate of that solver
        assert hits >= 30

    def test_s2_trace_positive_and_recorded(self):
        data, _, _ = random_instance(2)
        emf = fit_em(data, Hyper(-1.0))
        assert len(emf.s2_trace) == emf.iterations
        assert (emf.s2_trace > 0).all()

    def test_variant_validation(self):
        data, _, _ = random_instance(1)
        with pytest.raises(ValueError):
            fit_em(data, Hyper(0.0), variant="nope")
        with pytest.raises(ValueError):
            fit_em(data, Hyper(-1.0), variant="explicit-sigma")
