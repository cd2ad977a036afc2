import numpy as np
import pytest
from rich.console import Console

from ranking_opt.benchmark import (
    SKIPPED,
    BenchReport,
    BenchRow,
    dense_projected_gradient,
    run_benchmark,
)
from ranking_opt.common import SpectralError, set_dense_oracle_cap
from ranking_opt.optimizer import MasterParams
from ranking_opt.problems import PerronProblem
from ranking_opt.synthetic import random_strongly_connected, scale_free
from ranking_opt.testing import BaseTestClass, QuadraticProblem


class TestDenseProjectedGradient(BaseTestClass):
    def test_converges(self):
        problem = QuadraticProblem()
        trajectory = dense_projected_gradient(np.ones(3), problem, tol=1e-7)
        assert trajectory.converged
        assert trajectory.method == "dense"
        assert trajectory.alpha0 == 0.5
        np.testing.assert_allclose(trajectory.x, QuadraticProblem.OPTIMUM, atol=1e-6)
        assert trajectory.records[0].kind == "start"
        assert trajectory.records[-1].kind == "stop"
        assert problem.counters.inner_steps == 0

    def test_values_increase(self):
        trajectory = dense_projected_gradient(np.ones(3), QuadraticProblem(), tol=1e-7)
        values = [r.value for r in trajectory.records]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_size_cap(self):
        set_dense_oracle_cap(2)
        graph = random_strongly_connected(5, 3, seed=0)
        with pytest.raises(SpectralError):
            dense_projected_gradient(np.ones(3), PerronProblem(graph))


class TestRunBenchmark(BaseTestClass):
    def test_all_strategies(self):
        report = run_benchmark(QuadraticProblem, np.ones(3), MasterParams(tol=1e-7), eps=1e-9)
        assert [row.strategy for row in report.rows] == ["dense", "fixed-precision", "master"]
        assert all(row.status == "converged" for row in report.rows)
        assert all(row.reached_target for row in report.rows)
        assert not report.partial
        assert report.maximize
        assert report.converged
        assert report.target == pytest.approx(0.0, abs=1e-7)
        assert report.row("dense").inner_steps == 0
        assert report.row("master").inner_steps > 0
        assert set(report.trajectories) == {"dense", "fixed-precision", "master"}
        with pytest.raises(KeyError):
            report.row("newton")

    def test_dense_skipped_above_cap(self):
        set_dense_oracle_cap(2)
        report = run_benchmark(QuadraticProblem, np.ones(3), MasterParams(tol=1e-7), eps=1e-9)
        dense = report.row("dense")
        assert dense.status == SKIPPED
        assert dense.value is None
        assert dense.reached_target is None
        assert report.converged
        assert "dense" not in report.trajectories
        assert report.to_dict()["rows"][0]["status"] == SKIPPED

    def test_partial(self):
        report = BenchReport(
            rows=[
                BenchRow(strategy="dense", status="converged", value=2.0, reached_target=True),
                BenchRow(
                    strategy="master", status="not converged", value=1.5, reached_target=False
                ),
                BenchRow(strategy="fixed-precision", status=SKIPPED),
            ],
            target=2.0,
        )
        assert report.partial
        assert report.to_dict()["partial"]
        assert not report.converged
        assert report.to_dict()["target"] == 2.0

    def test_table(self):
        report = run_benchmark(QuadraticProblem, np.ones(3), MasterParams(tol=1e-7), eps=1e-9)
        table = report.table()
        assert table.row_count == 3
        console = Console(record=True, width=120)
        console.print(table)
        assert "fixed-precision" in console.export_text()

    @pytest.mark.slow
    def test_master_needs_fewer_inner_steps(self):
        graph = scale_free(1000, 60, seed=self.SEED)
        report = run_benchmark(
            lambda: PerronProblem(graph),
            np.ones(graph.num_facultative),
            MasterParams(tol=1e-6),
            eps=1e-10,
            strategies=("fixed-precision", "master"),
        )
        master = report.row("master")
        fixed = report.row("fixed-precision")
        assert master.status == fixed.status == "converged"
        assert master.inner_steps < fixed.inner_steps
