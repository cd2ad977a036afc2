import numpy as np
import pytest
import scipy.sparse

from ranking_opt.common import NonConvergenceError
from ranking_opt.graph import LinkGraph, assemble
from ranking_opt.hits import (
    ACTIVATE,
    DEACTIVATE,
    INDIFFERENT,
    classify,
    hits_chain_gradient,
    hits_dense,
    hits_matvec,
    hits_operator,
    round_heuristic,
    threshold_report,
)
from ranking_opt.synthetic import random_strongly_connected, random_weights
from ranking_opt.testing import BaseTestClass


class TestHitsOperator(BaseTestClass):
    def test_matvec(self):
        A = scipy.sparse.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
        assert hits_matvec(A, 0.01, np.ones(2)).tolist() == pytest.approx([0.02, 1.02])

    def test_operator_matches_dense(self):
        g = random_strongly_connected(8, 10, seed=self.rng)
        A = assemble(g, random_weights(g, seed=self.rng))
        op = hits_operator(A, 1e-3)
        dense = hits_dense(A, 1e-3)
        x = self.rng.random(8)
        assert np.allclose(op.matvec(x), dense @ x)
        assert np.allclose(op.rmatvec(x), dense.T @ x)
        assert np.allclose(dense, dense.T)

    def test_chain_gradient(self):
        # d/dA of w^T (A^T A) u is (A w) u^T + (A u) w^T.
        A = self.rng.random((4, 4))
        u = self.rng.random(4)
        w = self.rng.standard_normal(4)
        G = hits_chain_gradient(A, u, w).dense()
        h = 1e-5
        for i, j in [(0, 0), (1, 3), (3, 2)]:
            E = np.zeros_like(A)
            E[i, j] = h
            plus = w @ ((A + E).T @ (A + E)) @ u
            minus = w @ ((A - E).T @ (A - E)) @ u
            assert G[i, j] == pytest.approx((plus - minus) / (2 * h), rel=1e-7)


class TestClassify(BaseTestClass):
    def test_signs(self):
        gradient = np.array([1.0, -1.0, 1e-10])
        assert classify(gradient, 1e-8) == (ACTIVATE, DEACTIVATE, INDIFFERENT)
        assert classify(gradient, 1e-8, maximize=False) == (DEACTIVATE, ACTIVATE, INDIFFERENT)


class TestThresholdReport(BaseTestClass):
    def test_cutoffs_separate_classes(self):
        g = random_strongly_connected(10, 20, seed=self.rng)
        A = assemble(g, random_weights(g, seed=self.rng))
        u = 0.1 + self.rng.random(10)
        w = self.rng.standard_normal(10)
        report = threshold_report(g, A, u, w, tol=1e-12)
        assert set(report.cutoffs) == set(g.controlled_pages())
        for k, (i, j) in enumerate(g.facultative):
            if report.classes[k] == ACTIVATE:
                assert report.scores[j] > report.cutoffs[i]
            elif report.classes[k] == DEACTIVATE:
                assert report.scores[j] < report.cutoffs[i]
        assert report.order[0] == int(np.argmax(w / u))

    def test_page_without_outlinks(self):
        g = LinkGraph(n=3, obligatory={(1, 2), (2, 1)}, facultative=((0, 1), (0, 2)))
        A = assemble(g, np.zeros(2))
        report = threshold_report(g, A, np.ones(3), np.array([0.0, 1.0, -1.0]))
        assert report.cutoffs == {0: None}
        assert report.classes == (INDIFFERENT, INDIFFERENT)

    def test_violations_and_dict(self):
        g = LinkGraph(n=3, obligatory={(0, 1), (1, 2), (2, 0)}, facultative=((0, 2), (1, 0)))
        A = assemble(g, np.array([0.5, 0.0]))
        report = threshold_report(g, A, np.ones(3), np.array([-3.0, 0.0, 1.0]))
        assert report.classes == (ACTIVATE, DEACTIVATE)
        assert report.violations([0.5, 0.0]) == [0]
        assert report.violations([1.0, 0.0]) == []
        document = report.to_dict(g, [0.5, 0.0])
        assert document["arcs"][0] == {
            "source": 0,
            "target": 2,
            "gradient": pytest.approx(report.gradient[0]),
            "class": ACTIVATE,
            "weight": 0.5,
        }
        assert set(document) == {"cutoffs", "scores", "order", "shift", "arcs"}


class TestRounding(BaseTestClass):
    G = LinkGraph(
        n=5,
        obligatory={(k, (k + 1) % 5) for k in range(5)},
        facultative=((0, 2), (0, 3), (1, 3), (1, 4)),
    )
    COEFFICIENTS = np.array([1.0, -2.0, 3.0, 5.0])

    def value(self, x):
        return float(x @ self.COEFFICIENTS)

    def test_sweep(self):
        result = round_heuristic(self.G, [0.2, 0.7, 1.0, 0.0], self.value, relaxed_value=4.0)
        assert result.x.tolist() == [0.0, 0.0, 1.0, 0.0]
        assert result.value == 3.0
        assert [t for t, _, _ in result.sweep] == [0.0, 0.7, 1.0]
        assert [active for _, _, active in result.sweep] == [3, 2, 1]
        assert result.gap == pytest.approx(0.25)

    def test_minimize(self):
        result = round_heuristic(self.G, [0.2, 0.7, 1.0, 0.0], self.value, maximize=False)
        assert result.x.tolist() == [0.0, 1.0, 1.0, 0.0]
        assert result.gap is None

    def test_binary_input(self):
        result = round_heuristic(self.G, [1.0, 0.0, 1.0, 0.0], self.value)
        assert len(result.sweep) == 1
        assert result.value == 4.0

    def test_unavailable_candidate_is_skipped(self):
        def value(x):
            if x.sum() == 1:
                raise NonConvergenceError("iteration did not converge", 0.5, 10)
            return self.value(x)

        result = round_heuristic(self.G, [0.2, 0.7, 1.0, 0.0], value)
        assert result.sweep[-1] == (1.0, None, 1)
        assert result.x.tolist() == [1.0, 1.0, 1.0, 0.0]
        assert result.value == 2.0

    def test_no_candidate_available(self):
        def value(x):
            raise NonConvergenceError("iteration did not converge", 0.5, 10)

        with pytest.raises(NonConvergenceError):
            round_heuristic(self.G, [0.2, 0.7, 1.0, 0.0], value)

    def test_shape(self):
        with pytest.raises(ValueError, match="shape"):
            round_heuristic(self.G, [0.5], self.value)
