import dataclasses
import json

import numpy as np
import pytest

from ranking_opt.common import ConfigurationError, NonConvergenceError
from ranking_opt.optimizer import (
    ArmijoParams,
    MasterParams,
    approx_armijo,
    armijo_exact_step,
    estimate_approximation_constant,
    fixed_precision_gradient,
    initial_step,
    master_optimize,
    projected_displacement,
    write_trajectory,
)
from ranking_opt.problems import PerronProblem
from ranking_opt.synthetic import random_strongly_connected
from ranking_opt.testing import BaseTestClass, QuadraticProblem

START = np.array([0.5, 0.5, 0.5])


def J(x):
    return 0.5 * float(np.sum((x - QuadraticProblem.CENTER) ** 2))


def grad_J(x):
    return x - QuadraticProblem.CENTER


class TestParams(BaseTestClass):
    @pytest.mark.parametrize(
        "kwargs", [{"sigma": 0.0}, {"beta": 1.0}, {"alpha0": -1.0}, {"max_trials": 0}]
    )
    def test_armijo_validation(self, kwargs):
        with pytest.raises(ConfigurationError):
            ArmijoParams(**kwargs)

    @pytest.mark.parametrize(
        "kwargs", [{"omega": 1.0}, {"sigma_prime": 0.0}, {"delta0": 1.5}, {"n_start": -1}]
    )
    def test_master_validation(self, kwargs):
        with pytest.raises(ConfigurationError):
            MasterParams(**kwargs)

    def test_levels(self):
        mp = MasterParams()
        assert mp.delta(4) == 0.0625
        assert mp.inner_precision(4) == 0.0625
        assert mp.inner_precision(100) == mp.min_delta
        assert ArmijoParams().trial_cap(5) == 15

    def test_initial_step(self):
        ap = ArmijoParams(alpha0=2.0)
        assert initial_step(ap, np.array([-4.0, 1.0])) == 0.5
        assert initial_step(ap, np.zeros(2)) == 2.0
        assert initial_step(ap, np.array([1e-12])) == 2.0
        assert initial_step(ArmijoParams(alpha0=2.0, rescale=False), np.array([4.0])) == 2.0


class TestExactLineSearch(BaseTestClass):
    def test_projected_displacement(self):
        assert projected_displacement(START, grad_J(START), 1.0) == 0.5
        optimum = QuadraticProblem.OPTIMUM
        assert projected_displacement(optimum, grad_J(optimum), 1.0) == 0.0

    def test_first_trial_accepted(self):
        result = armijo_exact_step(START, J, grad_J)
        assert result.m == 0
        assert result.alpha == 1.0
        assert not result.failed
        assert result.x.tolist() == [1.0, 0.0, 0.5]

    def test_stationary_point(self):
        result = armijo_exact_step(QuadraticProblem.OPTIMUM, J, grad_J)
        assert not result.failed
        assert result.m == 0
        assert np.array_equal(result.x, QuadraticProblem.OPTIMUM)

    def test_backtracking(self):
        def bowl(x):
            return float(np.sum((x - 0.3) ** 2))

        def bowl_grad(x):
            return 2.0 * (x - 0.3)

        x = np.full(3, 0.4)
        result = armijo_exact_step(x, bowl, bowl_grad, ArmijoParams(alpha0=100.0))
        assert result.m == 7
        assert result.alpha == pytest.approx(100.0 / 2**7)
        assert bowl(result.x) < bowl(x)

    def test_failure(self):
        def never_better(y):
            return 0.0 if np.array_equal(y, START) else 1.0

        result = armijo_exact_step(START, never_better, grad_J, ArmijoParams(max_trials=5))
        assert result.failed
        assert result.m == 5
        assert np.array_equal(result.x, START)


class TestApproxLineSearch(BaseTestClass):
    def test_step_with_biased_gradient(self):
        problem = QuadraticProblem()
        result = approx_armijo(START, 4, problem)
        bias = 0.5 * 0.0625
        assert not result.failed
        assert result.m == 0
        assert result.x.tolist() == pytest.approx([1.0, 0.0, 0.5 + bias])
        assert result.evaluation.delta == 0.0625
        assert result.inner_steps == 2
        assert problem.counters.evaluations == 2

    def test_uses_current_evaluation(self):
        problem = QuadraticProblem()
        current = problem.evaluate(START, 0.0625)
        result = approx_armijo(START, 4, problem, current=current, delta=1e-3)
        assert result.inner_steps == 1
        assert result.evaluation.delta == 1e-3

    def test_failure(self):
        problem = QuadraticProblem(mislead=True)
        result = approx_armijo(START, 3, problem, ArmijoParams(trial_base=2))
        assert result.failed
        assert result.m == 5
        assert np.array_equal(result.x, START)
        assert problem.counters.evaluations == 1 + 5

    def test_matches_exact_search_on_perron_problem(self):
        graph = random_strongly_connected(8, 12, seed=self.rng, num_targets=3)
        problem = PerronProblem(graph, iteration_cap=100_000)

        def exact_J(x):
            return -problem.evaluate_exact(x).value

        def exact_grad(x):
            return -problem.evaluate_exact(x).gradient

        for _ in range(3):
            x = 0.2 + 0.6 * self.rng.random(12)
            params = ArmijoParams(alpha0=initial_step(ArmijoParams(), exact_grad(x)), rescale=False)
            exact = armijo_exact_step(x, exact_J, exact_grad, params)
            approx = approx_armijo(x, 50, problem, params, delta=1e-12)
            assert not exact.failed and not approx.failed
            assert approx.m == exact.m
            assert np.allclose(approx.x, exact.x, atol=1e-9)


class TestMasterLoop(BaseTestClass):
    def test_converges_to_stationary_point(self):
        problem = QuadraticProblem()
        trajectory = master_optimize(START, problem, MasterParams(tol=1e-7))
        assert trajectory.converged
        alpha0 = 1.0 / float(np.max(np.abs(grad_J(START))))
        assert projected_displacement(trajectory.x, grad_J(trajectory.x), alpha0) <= 1e-5
        assert np.allclose(trajectory.x, QuadraticProblem.OPTIMUM, atol=1e-5)
        assert not trajectory.heuristic

    def test_trajectory_records(self):
        problem = QuadraticProblem()
        mp = MasterParams(tol=1e-7)
        trajectory = master_optimize(START, problem, mp)
        records = trajectory.records
        assert records[0].kind == "start"
        assert records[0].level == mp.n_start
        assert records[-1].kind == "stop"
        levels = [r.level for r in records]
        assert levels == sorted(levels)
        for record in records:
            if record.kind == "step":
                assert record.decrease <= record.required
        assert trajectory.accepted_steps >= 1
        assert trajectory.level == records[-1].level
        assert mp.delta(trajectory.level) < mp.tol
        assert trajectory.total_inner_steps == problem.counters.inner_steps

    def test_approximation_constant(self):
        trajectory = master_optimize(START, QuadraticProblem(), MasterParams(tol=1e-7))
        assert estimate_approximation_constant(trajectory) == pytest.approx(0.25)
        assert trajectory.summary()["approximation_constant"] <= 1.0

    def test_summary_is_deterministic(self):
        first = master_optimize(START, QuadraticProblem(), MasterParams(tol=1e-6))
        second = master_optimize(START, QuadraticProblem(), MasterParams(tol=1e-6))
        assert first.summary() == second.summary()
        assert "wall_time" not in first.summary()

    def test_level_cap(self):
        mp = MasterParams(n_start=4, max_level=10)
        trajectory = master_optimize(START, QuadraticProblem(mislead=True), mp)
        assert not trajectory.converged
        assert trajectory.level == 10
        assert trajectory.accepted_steps == 0

    def test_outer_cap(self):
        trajectory = master_optimize(START, QuadraticProblem(), MasterParams(max_outer=2))
        assert not trajectory.converged
        assert len(trajectory.records) == 4

    def test_inner_failure_propagates(self):
        class Failing(QuadraticProblem):
            def _evaluate(self, x, delta, hot_start):
                if delta < 1e-2:
                    raise NonConvergenceError("inner solver gave up", 1.0, 10)
                return super()._evaluate(x, delta, hot_start)

        with pytest.raises(NonConvergenceError):
            master_optimize(START, Failing(), MasterParams(n_start=1))

    def test_step_length_fixed_at_first_informative_level(self):
        class CoarseFlat(QuadraticProblem):
            def _evaluate(self, x, delta, hot_start):
                evaluation = super()._evaluate(x, delta, hot_start)
                if delta > 0.04:
                    return dataclasses.replace(evaluation, gradient=np.zeros(3))
                return evaluation

        trajectory = master_optimize(START, CoarseFlat(), MasterParams(tol=1e-7))
        assert trajectory.records[1].kind == "refine"
        assert trajectory.records[1].trials is None
        assert trajectory.alpha0 == pytest.approx(1.0 / 1.515625)
        assert trajectory.converged
        assert np.allclose(trajectory.x, QuadraticProblem.OPTIMUM, atol=1e-5)

    @pytest.mark.parametrize("offset, converged", [(2e-6, True), (1e-3, False)])
    def test_stall_at_precision_floor(self, offset, converged):
        class FlatValue(QuadraticProblem):
            def _at(self, x, delta, steps):
                return dataclasses.replace(super()._at(x, delta, steps), value=0.0)

        mp = MasterParams()
        x0 = QuadraticProblem.OPTIMUM + np.array([0.0, 0.0, offset])
        trajectory = master_optimize(x0, FlatValue(), mp)
        assert trajectory.stalled
        assert trajectory.converged is converged
        assert trajectory.summary()["stalled"]
        assert mp.delta(trajectory.level) <= mp.min_delta
        assert trajectory.level < mp.max_level

    def test_fixed_precision_stall(self):
        class FlatValue(QuadraticProblem):
            def _at(self, x, delta, steps):
                return dataclasses.replace(super()._at(x, delta, steps), value=0.0)

        x0 = QuadraticProblem.OPTIMUM + np.array([0.0, 0.0, 2e-6])
        trajectory = fixed_precision_gradient(x0, FlatValue(), 1e-6)
        assert trajectory.stalled
        assert trajectory.converged

    def test_write_trajectory(self):
        trajectory = master_optimize(START, QuadraticProblem(), MasterParams(tol=1e-4))
        path = self.TEST_DIR / "trajectory.jsonl"
        write_trajectory(trajectory, path)
        lines = path.read_text().splitlines()
        assert len(lines) == len(trajectory.records)
        first = json.loads(lines[0])
        assert first["kind"] == "start"
        assert "wall_time" in first


class TestFixedPrecision(BaseTestClass):
    def test_converges(self):
        problem = QuadraticProblem()
        trajectory = fixed_precision_gradient(START, problem, 1e-9)
        assert trajectory.converged
        assert trajectory.method == "fixed-precision"
        assert np.allclose(trajectory.x, QuadraticProblem.OPTIMUM, atol=1e-8)
        assert all(r.delta == 1e-9 for r in trajectory.records)

    def test_invalid_eps(self):
        with pytest.raises(ConfigurationError):
            fixed_precision_gradient(START, QuadraticProblem(), 0.0)

    def test_failed_search_stops(self):
        trajectory = fixed_precision_gradient(
            START, QuadraticProblem(mislead=True), 1e-6, ArmijoParams(max_trials=10)
        )
        assert not trajectory.converged
        assert trajectory.records[-1].kind == "stop"
