"""
Strategy comparison: dense exact gradients, fixed-precision hot-started gradients and the coupled
master loop, each run from the same starting point on a fresh problem instance.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from rich.table import Table

from .common import SpectralError, get_dense_oracle_cap
from .optimizer import (
    ArmijoParams,
    IterateRecord,
    MasterParams,
    Trajectory,
    armijo_exact_step,
    fixed_precision_gradient,
    initial_step,
    master_optimize,
    projected_displacement,
)
from .problems import ProblemAdapter

logger = logging.getLogger(__name__)

STRATEGIES = ("dense", "fixed-precision", "master")

SKIPPED = "skipped (size cap)"


def dense_projected_gradient(
    x0: np.ndarray,
    adapter: ProblemAdapter,
    tol: float = 1e-6,
    ap: ArmijoParams = ArmijoParams(),
    max_outer: int = 1000,
    stall_factor: float = 10.0,
) -> Trajectory:
    """
    Projected gradient with exact line search, every value and gradient from the dense oracle.
    A failed line search ends the run, which still counts as converged when the displacement is
    at most ``stall_factor * tol``.

    Raises
    ------
    ``SpectralError``
        If the graph exceeds the dense oracle cap.
    """
    sign = -1.0 if adapter.maximize else 1.0
    start = time.perf_counter()
    x = adapter.project(np.asarray(x0, dtype=float))
    current = adapter.evaluate_exact(x)
    alpha0 = initial_step(ap, current.gradient)
    params = ArmijoParams(
        sigma=ap.sigma, alpha0=alpha0, beta=ap.beta, rescale=False, max_trials=ap.max_trials
    )
    records = [IterateRecord(iteration=0, kind="start", level=0, delta=0.0, value=current.value)]
    stalled = False
    converged = False
    for iteration in range(1, max_outer + 1):
        displacement = projected_displacement(x, sign * current.gradient, alpha0)
        if displacement <= tol:
            converged = True
            break
        gradient = sign * current.gradient
        search = armijo_exact_step(
            x,
            lambda y: sign * adapter.evaluate_exact(y).value,
            lambda _: gradient,
            params,
        )
        if search.failed or np.array_equal(search.x, x):
            logger.warning("Exact line search failed at iteration %d", iteration)
            stalled = True
            converged = displacement <= stall_factor * tol
            break
        x = search.x
        current = adapter.evaluate_exact(x)
        records.append(
            IterateRecord(
                iteration=iteration,
                kind="step",
                level=0,
                delta=0.0,
                value=current.value,
                alpha=search.alpha,
                trials=search.m,
                displacement=displacement,
                wall_time=time.perf_counter() - start,
            )
        )
    records.append(
        IterateRecord(
            iteration=len(records),
            kind="stop",
            level=0,
            delta=0.0,
            value=current.value,
            displacement=projected_displacement(x, sign * current.gradient, alpha0),
            wall_time=time.perf_counter() - start,
        )
    )
    return Trajectory(
        x=x,
        value=current.value,
        converged=converged,
        records=records,
        final=current,
        method="dense",
        alpha0=alpha0,
        stalled=stalled,
    )


@dataclass
class BenchRow:
    strategy: str
    status: str
    value: Optional[float] = None
    assemblies: int = 0
    evaluations: int = 0
    inner_steps: int = 0
    outer_iterations: int = 0
    wall_time: float = 0.0
    reached_target: Optional[bool] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "assemblies": self.assemblies,
            "evaluations": self.evaluations,
            "inner_steps": self.inner_steps,
            "outer_iterations": self.outer_iterations,
            "reached_target": self.reached_target,
            "status": self.status,
            "strategy": self.strategy,
            "value": self.value,
            "wall_time": self.wall_time,
        }


@dataclass
class BenchReport:
    rows: List[BenchRow]
    target: Optional[float]
    """
    Best terminal objective over the strategies that ran.
    """
    maximize: bool = True
    trajectories: Dict[str, Trajectory] = field(default_factory=dict, repr=False)

    @property
    def partial(self) -> bool:
        """
        Whether some strategy that ran did not reach the common target.
        """
        return any(row.reached_target is False for row in self.rows)

    @property
    def converged(self) -> bool:
        """
        Whether every strategy that ran converged.
        """
        return all(row.status == "converged" for row in self.rows if row.status != SKIPPED)

    def row(self, strategy: str) -> BenchRow:
        for row in self.rows:
            if row.strategy == strategy:
                return row
        raise KeyError(strategy)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "maximize": self.maximize,
            "partial": self.partial,
            "rows": [row.to_dict() for row in self.rows],
            "target": self.target,
        }

    def table(self) -> Table:
        table = Table(title="Strategy comparison")
        table.add_column("strategy")
        table.add_column("status")
        table.add_column("objective", justify="right")
        table.add_column("assemblies", justify="right")
        table.add_column("inner steps", justify="right")
        table.add_column("wall time (s)", justify="right")
        for row in self.rows:
            table.add_row(
                row.strategy,
                row.status,
                "-" if row.value is None else f"{row.value:.10g}",
                str(row.assemblies),
                str(row.inner_steps),
                f"{row.wall_time:.3f}",
            )
        return table


def run_benchmark(
    make_problem: Callable[[], ProblemAdapter],
    x0: np.ndarray,
    mp: MasterParams = MasterParams(),
    ap: ArmijoParams = ArmijoParams(),
    eps: Optional[float] = None,
    rtol: float = 1e-6,
    strategies=STRATEGIES,
) -> BenchReport:
    """
    Run each strategy on a fresh problem from ``make_problem`` and compare the counters.

    The fixed-precision baseline uses ``eps`` (default: the master tolerance) as its inner
    precision. A strategy reaches the target when its terminal objective is within ``rtol``
    (relative) of the best terminal objective.
    """
    rows: List[BenchRow] = []
    trajectories: Dict[str, Trajectory] = {}
    maximize = True
    for strategy in strategies:
        problem = make_problem()
        maximize = problem.maximize
        if strategy == "dense" and problem.graph.n > get_dense_oracle_cap():
            rows.append(BenchRow(strategy=strategy, status=SKIPPED))
            continue
        logger.info("Running strategy %s", strategy)
        start = time.perf_counter()
        try:
            if strategy == "dense":
                trajectory = dense_projected_gradient(
                    x0, problem, mp.tol, ap, mp.max_outer, mp.stall_factor
                )
            elif strategy == "fixed-precision":
                trajectory = fixed_precision_gradient(
                    x0,
                    problem,
                    mp.tol if eps is None else eps,
                    ap,
                    mp.max_outer,
                    stall_factor=mp.stall_factor,
                )
            elif strategy == "master":
                trajectory = master_optimize(x0, problem, mp, ap)
            else:
                raise ValueError(f"unknown strategy {strategy!r}")
        except SpectralError as err:
            logger.warning("Strategy %s skipped: %s", strategy, err)
            rows.append(BenchRow(strategy=strategy, status=SKIPPED))
            continue
        trajectories[strategy] = trajectory
        rows.append(
            BenchRow(
                strategy=strategy,
                status="converged" if trajectory.converged else "not converged",
                value=trajectory.value,
                assemblies=problem.counters.assemblies,
                evaluations=problem.counters.evaluations,
                inner_steps=problem.counters.inner_steps,
                outer_iterations=len(trajectory.records),
                wall_time=time.perf_counter() - start,
            )
        )

    values = [row.value for row in rows if row.value is not None]
    target = (max(values) if maximize else min(values)) if values else None
    if target is not None:
        for row in rows:
            if row.value is not None:
                row.reached_target = abs(row.value - target) <= rtol * max(1.0, abs(target))
    report = BenchReport(rows=rows, target=target, maximize=maximize, trajectories=trajectories)
    if report.partial:
        logger.warning("Some strategies did not reach the common target %.10g", target)
    return report
