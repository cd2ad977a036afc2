import numpy as np
import pytest
import scipy.sparse

from ranking_opt.common import ConfigurationError, DegenerateStateError, NonConvergenceError
from ranking_opt.functions import ExpSum, MeanZeroNormalization
from ranking_opt.graph import assemble
from ranking_opt import hots
from ranking_opt.hits import ACTIVATE, DEACTIVATE
from ranking_opt.hots import (
    HotsConfig,
    d_vector,
    hessian_dense,
    hessian_matvec,
    hots_aux_w,
    hots_fixed_point_step,
    hots_gradient,
    hots_gradient_contraction,
    hots_shift,
    hots_solve,
    hots_threshold_report,
    primal_flow,
    theta,
    theta_grad,
    u_map_d_form,
    u_map_log_form,
)
from ranking_opt.synthetic import random_strongly_connected
from ranking_opt.testing import BaseTestClass

TWO_CYCLE = scipy.sparse.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))


class HotsTestCase(BaseTestClass):
    def setup_method(self):
        super().setup_method()
        self.graph = random_strongly_connected(7, 10, seed=self.rng, num_targets=2)
        self.x = 0.2 + 0.8 * self.rng.random(self.graph.num_facultative)
        self.A = assemble(self.graph, self.x)
        self.cfg = HotsConfig(alpha=0.8, tol=1e-12, max_iter=100_000, target=self.graph.target_set)


class TestTwoCycle(BaseTestClass):
    cfg = HotsConfig(alpha=0.75)

    def test_theta(self):
        assert theta(np.zeros(2), TWO_CYCLE, self.cfg) == pytest.approx(2.732868, abs=1e-6)

    def test_d_vector(self):
        assert d_vector(np.zeros(2), TWO_CYCLE, self.cfg).tolist() == pytest.approx([8 / 3] * 2)

    def test_fixed_point(self):
        assert np.allclose(theta_grad(np.zeros(2), TWO_CYCLE, self.cfg), 0.0)
        assert np.allclose(u_map_log_form(np.zeros(2), TWO_CYCLE, self.cfg), 0.0)
        mean_zero = HotsConfig(alpha=0.75, normalization="mean-zero")
        assert hots_solve(None, TWO_CYCLE, mean_zero).scores.tolist() == pytest.approx([1.0, 1.0])
        state = hots_solve(None, TWO_CYCLE, self.cfg)
        assert state.scores.tolist() == pytest.approx([0.5, 0.5])
        assert state.iterations == 0

    def test_primal_flow(self):
        flow = primal_flow(np.zeros(2), TWO_CYCLE, self.cfg)
        assert flow.arc_flow.tolist() == pytest.approx([0.25, 0.25])
        assert flow.to_virtual.sum() == pytest.approx(0.25)
        assert flow.from_virtual.sum() == pytest.approx(0.25)
        assert flow.max_residual < 1e-14


class TestConfig(BaseTestClass):
    @pytest.mark.parametrize("alpha", [0.5, 1.0, 0.3])
    def test_alpha_range(self, alpha):
        with pytest.raises(ConfigurationError, match="alpha"):
            HotsConfig(alpha=alpha)

    def test_normalization(self):
        with pytest.raises(ConfigurationError, match="normalization"):
            HotsConfig(normalization="l1")


class TestFixedPoint(HotsTestCase):
    def test_gradient_matches_finite_differences(self):
        p = self.rng.standard_normal(7)
        g = theta_grad(p, self.A, self.cfg)
        h = 1e-6
        for k in range(7):
            e = np.zeros(7)
            e[k] = h
            fd = (theta(p + e, self.A, self.cfg) - theta(p - e, self.A, self.cfg)) / (2 * h)
            assert g[k] == pytest.approx(fd, abs=1e-8)

    def test_translation_invariance(self):
        p = self.rng.standard_normal(7)
        assert theta(p + 3.0, self.A, self.cfg) == pytest.approx(theta(p, self.A, self.cfg))
        assert abs(theta_grad(p, self.A, self.cfg).sum()) < 1e-12

    def test_map_forms_agree(self):
        p = self.rng.standard_normal(7)
        assert np.allclose(
            u_map_log_form(p, self.A, self.cfg), u_map_d_form(p, self.A, self.cfg), atol=1e-10
        )

    def test_step_decreases_theta(self):
        p = 2.0 * self.rng.standard_normal(7)
        following = hots_fixed_point_step(p, self.A, self.cfg)
        assert theta(following, self.A, self.cfg) <= theta(p, self.A, self.cfg) + 1e-12
        assert self.cfg.normalizer(7).value(following) == pytest.approx(0.0, abs=1e-12)

    def test_damping_gives_up(self, monkeypatch):
        p = np.zeros(7)
        monkeypatch.setattr(hots, "theta", lambda q, A, cfg: 0.0 if q is p else 1.0)
        with pytest.raises(NonConvergenceError, match="no descent") as info:
            hots_fixed_point_step(p, self.A, self.cfg)
        assert info.value.iterations == 60

    def test_solve(self):
        state = hots_solve(None, self.A, self.cfg)
        assert state.residual <= 1e-12
        assert self.cfg.normalizer(7).value(state.p) == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(u_map_log_form(state.p, self.A, self.cfg), state.p, atol=1e-10)
        assert state.s_arcs > 0 and state.s_plus > 0 and state.s_minus > 0
        assert primal_flow(state.p, self.A, self.cfg).max_residual < 1e-10

    def test_hot_start_is_cheaper(self):
        cold = hots_solve(None, self.A, self.cfg)
        hot = hots_solve(cold.p, self.A, self.cfg)
        assert hot.iterations == 0
        assert np.allclose(hot.p, cold.p)

    def test_iteration_cap(self):
        cfg = HotsConfig(alpha=0.8, tol=1e-12, max_iter=1)
        with pytest.raises(NonConvergenceError):
            hots_solve(self.rng.standard_normal(7), self.A, cfg)

    def test_no_arcs(self):
        with pytest.raises(DegenerateStateError):
            theta(np.zeros(3), scipy.sparse.csr_matrix((3, 3)), self.cfg)


class TestHessian(HotsTestCase):
    def test_matvec_matches_gradient_differences(self):
        p = self.rng.standard_normal(7)
        y = self.rng.standard_normal(7)
        h = 1e-6
        plus = theta_grad(p + h * y, self.A, self.cfg)
        minus = theta_grad(p - h * y, self.A, self.cfg)
        fd = (plus - minus) / (2 * h)
        assert np.allclose(hessian_matvec(p, self.A, self.cfg, y), fd, atol=1e-7)

    def test_kernel_and_symmetry(self):
        p = self.rng.standard_normal(7)
        H = hessian_dense(p, self.A, self.cfg)
        assert np.allclose(H, H.T, atol=1e-14)
        assert np.allclose(H @ np.ones(7), 0.0, atol=1e-14)
        eigenvalues = np.linalg.eigvalsh(H)
        assert abs(eigenvalues[0]) < 1e-12
        assert eigenvalues[1] > 0
        assert eigenvalues[-1] < 4.0


class TestDerivatives(HotsTestCase):
    def aux(self, cfg, state):
        f = ExpSum(self.graph.target_indicator)
        N = cfg.normalizer(7)
        return hots_aux_w(state.p, self.A, cfg, f.grad(state.p), N.grad(state.p), tol=1e-12)

    def test_aux_matches_pseudo_inverse(self):
        state = hots_solve(None, self.A, self.cfg)
        w, mode, products = self.aux(self.cfg, state)
        assert mode == "plain"
        assert products > 0
        f = ExpSum(self.graph.target_indicator)
        grad_f = f.grad(state.p)
        rhs = -grad_f + grad_f.sum() * self.cfg.normalizer(7).grad(state.p)
        expected = rhs @ np.linalg.pinv(hessian_dense(state.p, self.A, self.cfg))
        assert np.allclose(w, expected - expected.mean(), atol=1e-9)
        assert abs(w.sum()) < 1e-12

    def test_preconditioned(self):
        state = hots_solve(None, self.A, self.cfg)
        plain, _, _ = self.aux(self.cfg, state)
        cfg = HotsConfig(
            alpha=0.8, tol=1e-12, max_iter=100_000, target=self.graph.target_set, precondition=True
        )
        w, mode, _ = self.aux(cfg, state)
        assert mode in ("preconditioned", "preconditioned-fallback")
        assert np.allclose(w, plain, atol=1e-9)

    def test_gradient_forms_agree(self):
        state = hots_solve(None, self.A, self.cfg)
        w = self.rng.standard_normal(7)
        w -= w.mean()
        G = hots_gradient(state.p, w, self.A, self.cfg)
        contraction = hots_gradient_contraction(state.p, w, self.A, self.cfg)
        assert np.allclose(G.dense(), contraction, atol=1e-12)

    def test_gradient_matches_finite_differences(self):
        cfg = HotsConfig(
            alpha=0.8, tol=1e-13, max_iter=100_000, normalization="mean-zero", target={0}
        )
        f = ExpSum(self.graph.target_indicator)
        N = MeanZeroNormalization()
        state = hots_solve(None, self.A, cfg)
        w, _, _ = hots_aux_w(state.p, self.A, cfg, f.grad(state.p), N.grad(state.p), tol=1e-13)
        G = hots_gradient(state.p, w, self.A, cfg)
        h = 1e-4
        for k in range(0, self.graph.num_facultative, 3):
            step = np.zeros_like(self.x)
            step[k] = h
            plus = hots_solve(state.p, assemble(self.graph, self.x + step), cfg)
            minus = hots_solve(state.p, assemble(self.graph, self.x - step), cfg)
            fd = (f.value(plus.p) - f.value(minus.p)) / (2 * h)
            i, j = self.graph.facultative[k]
            assert G.entry(i, j) == pytest.approx(fd, rel=1e-4, abs=1e-6)

    def test_threshold_report(self):
        state = hots_solve(None, self.A, self.cfg)
        w, _, _ = self.aux(self.cfg, state)
        report = hots_threshold_report(self.graph, self.A, state.p, w, self.cfg, tol=1e-12)
        B = hots_shift(state.p, w, self.A)
        assert report.shift == B
        for k, (i, j) in enumerate(self.graph.facultative):
            assert report.cutoffs[i] == pytest.approx(w[i] + B)
            if report.classes[k] == ACTIVATE:
                assert w[j] < w[i] + B
            elif report.classes[k] == DEACTIVATE:
                assert w[j] > w[i] + B
        assert report.order[0] == int(np.argmin(w))
