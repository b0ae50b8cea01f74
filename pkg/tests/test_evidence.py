import math

import numpy as np
import pytest
from scipy.integrate import quad

from adaridge import (
    Dataset,
    EVIDENCE_MU,
    Hyper,
    PosteriorState,
    conditional_marginal,
    fit_joint_mode,
    laplace_log_evidence,
    mc_log_evidence,
    negative_hessian,
    select_eta,
    standardize,
)
from adaridge.errors import EmptyBox, NonFiniteEvidence, NonInteriorMode
from adaridge.evidence import EvidenceEstimate, box_log_volume, _polish_mode
from adaridge.model import restrict_to_active
from conftest import fd_hessian, log_joint_of_theta, random_instance, toeplitz_design


def interior_state(data, rng, eta=0.8):
    p = data.p
    beta = rng.standard_normal(p)
    sigma2 = float(rng.uniform(0.8, 2.5))
    v_inv = rng.uniform(0.3, 3.0, p)
    return PosteriorState(beta=beta, sigma2=sigma2, v_inv=v_inv,
                          active=np.ones(p, dtype=bool)), Hyper(eta, mu=0.01)


def single_predictor_instance(seed, n=60, signal=4.0, noise=1.0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    y = signal * x + noise * rng.standard_normal(n)
    return standardize(x[:, None], y)


class TestNegativeHessian:
    def test_matches_finite_differences(self):
        for seed in range(10):
            data, _, _ = random_instance(seed, n_range=(30, 60), p_range=(2, 4))
            rng = np.random.default_rng(seed)
            state, h = interior_state(data, rng)
            blocks = negative_hessian(state, data, h)
            analytic = blocks.assemble()
            theta = np.concatenate([state.beta, [state.sigma2], state.v_inv])
            fd = -fd_hessian(log_joint_of_theta(data, h), theta)
            scale = np.max(np.abs(analytic))
            assert np.max(np.abs(fd - analytic)) / scale < 1e-5

    def test_zero_beta_kills_couplings(self, rng):
        data, _, _ = random_instance(4, p_range=(3, 3))
        state = PosteriorState(beta=np.zeros(3), sigma2=1.2,
                               v_inv=np.array([0.5, 1.0, 2.0]),
                               active=np.ones(3, dtype=bool))
        blocks = negative_hessian(state, data, Hyper(0.4))
        np.testing.assert_array_equal(blocks.bv, 0.0)
        np.testing.assert_array_equal(blocks.sv, 0.0)

    def test_orthonormal_single_predictor_beta_block(self, rng):
        x = rng.standard_normal(25)
        x /= np.linalg.norm(x)
        data = Dataset(x[:, None], rng.standard_normal(25))
        state = PosteriorState(beta=np.array([0.7]), sigma2=2.0,
                               v_inv=np.array([1.5]),
                               active=np.array([True]))
        blocks = negative_hessian(state, data, Hyper(0.0))
        assert blocks.bb[0, 0] == pytest.approx((1.0 + 1.5) / 2.0, rel=1e-12)

    def test_assembled_matrix_symmetric(self, rng):
        data, _, _ = random_instance(8, p_range=(3, 5))
        state, h = interior_state(data, rng)
        m = negative_hessian(state, data, h).assemble()
        np.testing.assert_array_equal(m, m.T)

    def test_boundary_eta_rejected(self, rng):
        data, _, _ = random_instance(1, p_range=(2, 2))
        state, _ = interior_state(data, rng)
        with pytest.raises(NonInteriorMode):
            negative_hessian(state, data, Hyper(-0.5))


class TestLaplace:
    def test_empty_model_matches_sigma2_quadrature(self, rng):
        # pure noise, everything pruned: the evidence is the
        # one-dimensional integral of the likelihood at beta = 0 against
        # the Jeffreys prior on the variance
        x = rng.standard_normal((60, 3))
        y = rng.standard_normal(60)
        data, _ = standardize(x, y)
        fit = fit_joint_mode(data, Hyper(8.0))
        assert not fit.state.active.any()
        est = laplace_log_evidence(fit, data, Hyper(8.0, mu=EVIDENCE_MU))

        yty = float(data.y @ data.y)
        n = data.n

        def ilog(s2):
            return (-(n / 2.0) * math.log(2 * math.pi * s2)
                    - yty / (2 * s2) - math.log(s2))

        mode = yty / (n + 2)
        shift = ilog(mode)
        val, _ = quad(lambda s2: math.exp(ilog(s2) - shift), mode / 50, mode * 50,
                      limit=300)
        oracle = shift + math.log(val)
        assert est.log_value == pytest.approx(oracle, abs=0.1)

    def test_deterministic(self):
        data, _, _ = random_instance(3)
        fit = fit_joint_mode(data, Hyper(0.5))
        h = Hyper(0.5, mu=EVIDENCE_MU)
        a = laplace_log_evidence(fit, data, h)
        b = laplace_log_evidence(fit, data, h)
        assert a.log_value == b.log_value

    def test_estimate_tags(self):
        data, _, _ = random_instance(3)
        fit = fit_joint_mode(data, Hyper(0.5))
        est = laplace_log_evidence(fit, data, Hyper(0.5, mu=EVIDENCE_MU))
        assert est.method == "laplace"
        assert est.k is None and est.mc_se is None

    def test_dimension_constant_switch(self):
        data, _, _ = random_instance(3)
        fit = fit_joint_mode(data, Hyper(0.5))
        h = Hyper(0.5, mu=EVIDENCE_MU)
        full = laplace_log_evidence(fit, data, h, dimension_constant="full")
        lit = laplace_log_evidence(fit, data, h, dimension_constant="variables")
        p_active = int(fit.state.active.sum())
        gap = (p_active + 1) / 2.0 * math.log(2 * math.pi)
        assert full.log_value - lit.log_value == pytest.approx(gap, rel=1e-12)


class TestConditionalMarginal:
    def test_scalar_closed_form(self, rng):
        x = rng.standard_normal(30)
        x /= np.linalg.norm(x)
        y = rng.standard_normal(30)
        data = Dataset(x[:, None], y)
        t = 1.7
        c = float(x @ y)
        yty = float(y @ y)
        s2 = yty - c**2 * t / (1.0 + t) * (1.0 / 1.0)  # x'x = 1
        # S^2 = y'y - (x'y)^2 / (1 + v_inv)
        s2 = yty - c**2 / (1.0 + t)
        expected = (math.lgamma(15.0) - 15.0 * math.log(math.pi)
                    - 15.0 * math.log(s2) + 0.5 * math.log(t)
                    - 0.5 * math.log(1.0 + t))
        assert conditional_marginal(data, [t]) == pytest.approx(expected, abs=1e-12)

    def test_matches_nested_quadrature(self):
        # integrate the likelihood against the coefficient prior and the
        # Jeffreys variance prior numerically on a one-predictor problem
        data, _ = single_predictor_instance(5, n=25, signal=2.0)
        v_inv = 0.8
        x = data.x[:, 0]
        y = data.y
        n = data.n

        def loglik_given_sigma(s2):
            # closed normal integral over beta at fixed sigma2
            a = float(x @ x) + v_inv
            c = float(x @ y)
            yty = float(y @ y)
            return (-(n / 2.0) * math.log(2 * math.pi * s2)
                    + 0.5 * math.log(v_inv) - 0.5 * math.log(a)
                    - (yty - c**2 / a) / (2 * s2))

        # reference point to stabilize the outer quadrature
        shift = loglik_given_sigma(1.0)

        def outer(s2):
            return math.exp(loglik_given_sigma(s2) - shift) / s2

        val, err = quad(outer, 1e-4, 200.0, limit=500)
        oracle = shift + math.log(val)
        assert conditional_marginal(data, [v_inv]) == pytest.approx(oracle, abs=1e-6)

    def test_infinite_precision_limit_is_null_model(self, rng):
        data, _ = single_predictor_instance(7)
        n = data.n
        yty = float(data.y @ data.y)
        null = math.lgamma(n / 2) - (n / 2) * math.log(math.pi) - (n / 2) * math.log(yty)
        # as the precision grows the predictor stops explaining anything;
        # the S^2 term tends to y'y (the remaining factors vanish jointly)
        big = conditional_marginal(data, [1e12])
        small = conditional_marginal(data, [1e2])
        assert abs(big - null) < abs(small - null)
        assert big == pytest.approx(null, abs=1e-3)


class TestMonteCarloEvidence:
    def test_deterministic_and_tagged(self):
        data, _ = single_predictor_instance(11)
        fit = fit_joint_mode(data, Hyper(0.5))
        h = Hyper(0.5, mu=EVIDENCE_MU)
        a = mc_log_evidence(fit, data, h, k=10.0, draws=500, seed=42)
        b = mc_log_evidence(fit, data, h, k=10.0, draws=500, seed=42)
        assert a.log_value == b.log_value and a.mc_se == b.mc_se
        assert a.method == "hypercube-mc" and a.k == 10.0 and a.mc_draws == 500

    def test_matches_box_quadrature_within_three_se(self):
        for seed in range(10):
            data, _ = single_predictor_instance(seed, n=60)
            eta = 0.5
            fit = fit_joint_mode(data, Hyper(eta))
            h = Hyper(eta, mu=EVIDENCE_MU)
            est = mc_log_evidence(fit, data, h, k=10.0, draws=2000, seed=seed)

            red_state, red = restrict_to_active(fit.state, data)
            _, _, v_inv = _polish_mode(red, red_state.beta, h)
            sig = v_inv[0] / math.sqrt(0.5 + eta)
            lo, hi = max(0.0, v_inv[0] - 10 * sig), v_inv[0] + 10 * sig

            def ilog(t):
                return (conditional_marginal(red, [t]) + eta * math.log(t)
                        - h.mu * t - math.lgamma(eta + 1.0))

            shift = ilog(v_inv[0])
            val, _ = quad(lambda t: math.exp(ilog(t) - shift), lo, hi, limit=400)
            oracle = shift + math.log(val / (hi - lo))
            assert abs(est.log_value - oracle) <= 3.0 * est.mc_se

    def test_volume_flag_shifts_by_box_volume(self):
        data, _ = single_predictor_instance(13)
        fit = fit_joint_mode(data, Hyper(1.0))
        h = Hyper(1.0, mu=EVIDENCE_MU)
        avg = mc_log_evidence(fit, data, h, k=5.0, draws=400, seed=0)
        tot = mc_log_evidence(fit, data, h, k=5.0, draws=400, seed=0,
                              include_box_volume=True)
        vol = box_log_volume(fit, data, h, k=5.0)
        assert tot.log_value - avg.log_value == pytest.approx(vol, rel=1e-12)

    def test_every_draw_finite(self):
        # echoes the propriety bound: a positive inverse scale keeps the
        # integrand finite at every sampled precision
        for seed in range(5):
            data, _, _ = random_instance(seed)
            fit = fit_joint_mode(data, Hyper(0.25))
            est = mc_log_evidence(fit, data, Hyper(0.25, mu=EVIDENCE_MU),
                                  k=1000.0, draws=500, seed=seed)
            assert math.isfinite(est.log_value)
            assert math.isfinite(est.mc_se)

    def test_empty_model_exact(self, rng):
        x = rng.standard_normal((40, 2))
        y = rng.standard_normal(40)
        data, _ = standardize(x, y)
        fit = fit_joint_mode(data, Hyper(8.0))
        assert not fit.state.active.any()
        est = mc_log_evidence(fit, data, Hyper(8.0, mu=EVIDENCE_MU), k=3.0,
                              draws=100, seed=0)
        n, yty = data.n, float(data.y @ data.y)
        expected = (math.lgamma(n / 2) - (n / 2) * math.log(math.pi)
                    - (n / 2) * math.log(yty))
        assert est.log_value == pytest.approx(expected, rel=1e-12)
        assert est.mc_se == 0.0

    def test_bad_box_rejected(self):
        data, _ = single_predictor_instance(3)
        fit = fit_joint_mode(data, Hyper(0.5))
        with pytest.raises(EmptyBox):
            mc_log_evidence(fit, data, Hyper(0.5, mu=EVIDENCE_MU), k=0.0,
                            draws=10, seed=0)


class TestEvidenceEstimateInvariants:
    def test_mc_fields_required_together(self):
        with pytest.raises(ValueError):
            EvidenceEstimate(log_value=0.0, method="laplace", k=3.0,
                             mc_draws=10, mc_se=0.1)
        with pytest.raises(ValueError):
            EvidenceEstimate(log_value=0.0, method="hypercube-mc")
        with pytest.raises(ValueError):
            EvidenceEstimate(log_value=0.0, method="hypercube-mc", k=3.0,
                             mc_draws=10, mc_se=-0.1)


class TestSelectEta:
    def test_singleton_grid(self):
        data, _, _ = random_instance(6)
        sel = select_eta(data, [0.25])
        assert sel.best_eta == 0.25
        assert len(sel.estimates) == 1

    def test_tie_breaks_to_smaller_eta(self):
        # duplicated grid value produces identical evidence; the first
        # (smaller index) entry must win
        data, _, _ = random_instance(6)
        sel = select_eta(data, [0.25, 0.25])
        assert sel.best_eta == 0.25
        assert sel.estimates[0].log_value == sel.estimates[1].log_value

    def test_failed_grid_point_skipped(self, monkeypatch):
        data, _, _ = random_instance(6)
        import adaridge.evidence as ev

        real = ev.laplace_log_evidence
        calls = {"n": 0}

        def flaky(fit, d, h, dimension_constant="full"):
            calls["n"] += 1
            if calls["n"] == 1:
                raise NonFiniteEvidence("synthetic failure")
            return real(fit, d, h, dimension_constant)

        monkeypatch.setattr(ev, "laplace_log_evidence", flaky)
        sel = ev.select_eta(data, [0.0, 0.5])
        assert sel.estimates[0] is None
        assert sel.best_eta == 0.5

    def test_all_points_failing_raises(self, monkeypatch):
        data, _, _ = random_instance(6)
        import adaridge.evidence as ev

        def broken(fit, d, h, dimension_constant="full"):
            raise NonFiniteEvidence("synthetic failure")

        monkeypatch.setattr(ev, "laplace_log_evidence", broken)
        with pytest.raises(NonFiniteEvidence):
            ev.select_eta(data, [0.0, 0.5])

    def test_sparse_design_recovers_signal(self):
        hits = 0
        for rep in range(20):
            rng = np.random.default_rng([101, rep])
            x, y = toeplitz_design(100, [5.0, 0, 0, 0, 0, 0, 0, 0], 3.0, rng)
            data, _ = standardize(x, y)
            sel = select_eta(data)
            act = sel.refit.state.active
            if act[0] and not act[1:].any():
                hits += 1
        assert hits >= 15
