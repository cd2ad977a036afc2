"""
Projected gradient methods on the box ``[0, 1]^k`` for objectives that are only available
through approximate oracles.

The master loop evaluates the objective and its gradient at precision ``Delta(n) = Delta0^n`` and
only refines the precision (increments ``n``) when a line search fails or when an accepted step
does not decrease the objective by at least ``sigma' Delta(n)^omega``.

Everything is stated for minimization. Problems that maximize are run on the negated objective.
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from .bundle import AtomicFile, dumps_line
from .common import ConfigurationError, PathOrStr
from .graph import project_box
from .problems.adapter import Evaluation, ProblemAdapter
from .progress import QuietProgress

logger = logging.getLogger(__name__)

RESCALE_FLOOR = 1e-8


@dataclass(frozen=True)
class ArmijoParams:
    sigma: float = 0.1
    """
    Sufficient decrease constant, in ``(0, 1)``.
    """

    alpha0: float = 1.0
    """
    Initial step length.
    """

    beta: float = 0.5
    """
    Step reduction factor, in ``(0, 1)``.
    """

    trial_base: int = 10
    """
    The approximate line search at level ``n`` tries at most ``trial_base + n`` step lengths.
    """

    rescale: bool = True
    """
    Divide :attr:`alpha0` once by ``|g|_inf`` at the starting point.
    """

    max_trials: int = 60
    """
    Hard cap of the exact line search.
    """

    def __post_init__(self):
        if not 0.0 < self.sigma < 1.0:
            raise ConfigurationError(f"sigma must lie in (0, 1), got {self.sigma}")
        if not 0.0 < self.beta < 1.0:
            raise ConfigurationError(f"beta must lie in (0, 1), got {self.beta}")
        if self.alpha0 <= 0.0:
            raise ConfigurationError(f"alpha0 must be positive, got {self.alpha0}")
        if self.trial_base < 0 or self.max_trials < 1:
            raise ConfigurationError("trial caps must be nonnegative")

    def trial_cap(self, level: int) -> int:
        return self.trial_base + level


@dataclass(frozen=True)
class MasterParams:
    omega: float = 0.5
    sigma_prime: float = 0.01
    n_start: int = 4
    delta0: float = 0.5
    max_outer: int = 1000
    """
    Cap on outer iterations, steps and refinements together.
    """

    tol: float = 1e-6
    """
    Stationarity tolerance, on both ``Delta(n)`` and the projected displacement.
    """

    min_delta: float = 1e-13
    """
    Floor on the inner precision actually requested from the problem.
    """

    max_level: int = 200

    stall_factor: float = 10.0
    """
    When the line search fails at the precision floor, the run counts as converged if the
    projected displacement is below ``stall_factor * tol``.
    """

    def __post_init__(self):
        if not 0.0 < self.omega < 1.0:
            raise ConfigurationError(f"omega must lie in (0, 1), got {self.omega}")
        if not 0.0 < self.sigma_prime < 1.0:
            raise ConfigurationError(f"sigma_prime must lie in (0, 1), got {self.sigma_prime}")
        if not 0.0 < self.delta0 < 1.0:
            raise ConfigurationError(f"delta0 must lie in (0, 1), got {self.delta0}")
        if self.n_start < 0:
            raise ConfigurationError(f"n_start must be nonnegative, got {self.n_start}")
        if self.tol <= 0.0 or self.min_delta <= 0.0:
            raise ConfigurationError("tolerances must be positive")
        if self.stall_factor < 1.0:
            raise ConfigurationError(f"stall_factor must be at least 1, got {self.stall_factor}")

    def delta(self, level: int) -> float:
        return self.delta0**level

    def inner_precision(self, level: int) -> float:
        return max(self.delta(level), self.min_delta)


@dataclass
class IterateRecord:
    """
    One line of the trajectory log.
    """

    iteration: int
    kind: str
    """
    ``"start"``, ``"step"`` (accepted), ``"refine"`` (precision increased) or ``"stop"``.
    """
    level: int
    delta: float
    value: float
    """
    Objective value in the problem's own sense.
    """
    alpha: Optional[float] = None
    trials: Optional[int] = None
    """
    Index ``m`` of the accepted step length ``beta^m alpha0``.
    """
    decrease: Optional[float] = None
    """
    Decrease of the minimized objective at this level. Negative on accepted steps.
    """
    required: Optional[float] = None
    """
    ``-sigma' Delta(n)^omega``.
    """
    displacement: Optional[float] = None
    inner_steps: int = 0
    approximation_constant: Optional[float] = None
    wall_time: float = 0.0


@dataclass
class Trajectory:
    x: np.ndarray
    value: float
    converged: bool
    records: List[IterateRecord] = field(default_factory=list)
    final: Optional[Evaluation] = None
    heuristic: bool = False
    method: str = "master"
    alpha0: float = 1.0
    """
    Initial step length after rescaling. A point is stationary to tolerance ``tol`` when no arc
    with a gradient above ``tol / alpha0`` has room to move.
    """

    stalled: bool = False
    """
    Set when the run ended on a failed line search at the precision floor.
    """

    @property
    def total_inner_steps(self) -> int:
        return sum(r.inner_steps for r in self.records)

    @property
    def accepted_steps(self) -> int:
        return sum(r.kind == "step" for r in self.records)

    @property
    def level(self) -> int:
        return self.records[-1].level if self.records else 0

    def summary(self) -> Dict[str, Any]:
        """
        Deterministic description of the run, without wall-clock times.
        """
        return {
            "accepted_steps": self.accepted_steps,
            "alpha0": self.alpha0,
            "approximation_constant": estimate_approximation_constant(self),
            "converged": self.converged,
            "final_level": self.level,
            "heuristic": self.heuristic,
            "method": self.method,
            "outer_iterations": len(self.records),
            "stalled": self.stalled,
            "total_inner_steps": self.total_inner_steps,
            "value": self.value,
        }


@dataclass(frozen=True)
class LineSearchResult:
    x: np.ndarray
    alpha: float
    m: int
    evaluation: Optional[Evaluation]
    """
    Evaluation at :attr:`x`, at the precision of the search.
    """
    failed: bool = False
    inner_steps: int = 0
    """
    Inner steps spent on all trial evaluations, accepted or not.
    """


def projected_displacement(
    x: np.ndarray, g: np.ndarray, alpha0: float, lower: float = 0.0, upper: float = 1.0
) -> float:
    """
    ``|x - P(x - alpha0 g)|_inf``, which vanishes exactly at stationary points.
    """
    return float(np.max(np.abs(x - project_box(x - alpha0 * g, lower, upper)), initial=0.0))


def armijo_exact_step(
    x: np.ndarray,
    J: Callable[[np.ndarray], float],
    grad_J: Callable[[np.ndarray], np.ndarray],
    params: ArmijoParams = ArmijoParams(),
    lower: float = 0.0,
    upper: float = 1.0,
) -> LineSearchResult:
    """
    Armijo line search along the projected arc with exact oracles.

    Returns the first ``m`` such that ``x' = P(x - beta^m alpha0 grad J(x))`` satisfies
    ``J(x') - J(x) <= -sigma |x - x'|^2 / alpha``. A result with ``failed=True`` is returned when
    no ``m < params.max_trials`` passes.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(grad_J(x), dtype=float)
    value = J(x)
    alpha = params.alpha0
    for m in range(params.max_trials):
        trial = project_box(x - alpha * g, lower, upper)
        if np.array_equal(trial, x):
            return LineSearchResult(x=x, alpha=alpha, m=m, evaluation=None)
        step = trial - x
        if J(trial) - value <= -params.sigma * float(step @ step) / alpha:
            return LineSearchResult(x=trial, alpha=alpha, m=m, evaluation=None)
        alpha *= params.beta
    return LineSearchResult(x=x, alpha=alpha, m=params.max_trials, evaluation=None, failed=True)


class _Oracle:
    """
    Minimization view of a problem adapter.
    """

    def __init__(self, adapter: ProblemAdapter) -> None:
        self.adapter = adapter
        self.sign = -1.0 if adapter.maximize else 1.0

    def evaluate(self, x: np.ndarray, delta: float, hot_start: Any = None) -> Evaluation:
        return self.adapter.evaluate(x, delta, hot_start)

    def J(self, evaluation: Evaluation) -> float:
        return self.sign * evaluation.value

    def g(self, evaluation: Evaluation) -> np.ndarray:
        return self.sign * evaluation.gradient


def approx_armijo(
    x: np.ndarray,
    n: int,
    adapter: ProblemAdapter,
    params: ArmijoParams = ArmijoParams(),
    master: MasterParams = MasterParams(),
    current: Optional[Evaluation] = None,
    alpha0: Optional[float] = None,
    delta: Optional[float] = None,
) -> LineSearchResult:
    """
    Armijo line search along the projected arc with the level-``n`` approximations of the
    objective and its gradient.

    Every trial point gets its own evaluation at precision ``Delta(n)``, hot-started from
    ``current``. An explicit ``delta`` overrides the level precision. If no ``m`` below
    ``params.trial_cap(n)`` passes, the search has failed and the result has ``failed=True``.

    Raises
    ------
    ``NonConvergenceError``
        When an inner solver does not reach ``Delta(n)``.
    """
    oracle = _Oracle(adapter)
    if delta is None:
        delta = master.inner_precision(n)
    x = np.asarray(x, dtype=float)
    inner = 0
    if current is None:
        current = oracle.evaluate(x, delta)
        inner += current.inner_steps
    value = oracle.J(current)
    g = oracle.g(current)
    alpha = params.alpha0 if alpha0 is None else alpha0
    cap = params.trial_cap(n)
    for m in range(cap):
        trial = adapter.project(x - alpha * g)
        if np.array_equal(trial, x):
            return LineSearchResult(x=x, alpha=alpha, m=m, evaluation=current, inner_steps=inner)
        evaluation = oracle.evaluate(trial, delta, current.handle)
        inner += evaluation.inner_steps
        step = trial - x
        logger.debug("Level %d trial %d: alpha=%.3e", n, m, alpha)
        if oracle.J(evaluation) - value <= -params.sigma * float(step @ step) / alpha:
            return LineSearchResult(
                x=trial, alpha=alpha, m=m, evaluation=evaluation, inner_steps=inner
            )
        alpha *= params.beta
    return LineSearchResult(
        x=x, alpha=alpha, m=cap, evaluation=current, failed=True, inner_steps=inner
    )


def _rescalable(params: ArmijoParams, g: np.ndarray) -> bool:
    return not params.rescale or float(np.max(np.abs(g), initial=0.0)) > RESCALE_FLOOR


def initial_step(params: ArmijoParams, g: np.ndarray) -> float:
    """
    The initial step length, divided by ``|g|_inf`` when rescaling is on and the gradient is not
    negligible.
    """
    if not params.rescale:
        return params.alpha0
    scale = float(np.max(np.abs(g), initial=0.0))
    return params.alpha0 / scale if scale > RESCALE_FLOOR else params.alpha0


def master_optimize(
    x0: np.ndarray,
    adapter: ProblemAdapter,
    mp: MasterParams = MasterParams(),
    ap: ArmijoParams = ArmijoParams(),
    progress=None,
) -> Trajectory:
    """
    Coupled gradient and power iterations: projected gradient steps on the level-``n``
    approximations, refining ``n`` only when needed.

    Parameters
    ----------
    x0 :
        Starting weights, projected onto the box first.
    adapter :
        The problem. Inner solvers are hot-started from the previous evaluation throughout.
    mp :
        Master loop parameters.
    ap :
        Line search parameters.
    progress :
        Optional rich ``Progress`` (see :func:`~ranking_opt.progress.get_optimization_progress`).

    Returns
    -------
    :class:`Trajectory`
        With ``converged=False`` if the outer cap or the level cap was reached first, or if the
        line search failed at the precision floor away from a stationary point.

    Raises
    ------
    ``NonConvergenceError``
        When an inner solver fails to reach the requested precision.
    """
    if adapter.heuristic:
        logger.warning(
            "The %s problem has no convergence guarantee in the master loop, "
            "the run is heuristic",
            adapter.name,
        )
    progress = progress or QuietProgress()
    oracle = _Oracle(adapter)
    start = time.perf_counter()
    x = adapter.project(np.asarray(x0, dtype=float))
    level = mp.n_start
    current = oracle.evaluate(x, mp.inner_precision(level))
    # Fixed at the first level whose gradient is not negligible.
    alpha0: Optional[float] = None
    records = [
        IterateRecord(
            iteration=0,
            kind="start",
            level=level,
            delta=mp.delta(level),
            value=current.value,
            inner_steps=current.inner_steps,
            wall_time=time.perf_counter() - start,
        )
    ]
    task = progress.add_task("optimizing", total=mp.max_outer, value=current.value, level=level)
    converged = False
    stalled = False

    for iteration in range(1, mp.max_outer + 1):
        g = oracle.g(current)
        if alpha0 is None and (_rescalable(ap, g) or mp.delta(level) < mp.tol):
            alpha0 = initial_step(ap, g)
            logger.debug("Initial step length %.3e fixed at level %d", alpha0, level)
        search: Optional[LineSearchResult] = None
        displacement: Optional[float] = None
        required: Optional[float] = None
        decrease: Optional[float] = None
        accepted = False
        if alpha0 is not None:
            displacement = projected_displacement(x, g, alpha0)
            if mp.delta(level) < mp.tol and displacement < mp.tol:
                converged = True
                break
            search = approx_armijo(x, level, adapter, ap, mp, current=current, alpha0=alpha0)
            required = -mp.sigma_prime * mp.delta(level) ** mp.omega
            if not search.failed and search.evaluation is not current:
                assert search.evaluation is not None
                decrease = oracle.J(search.evaluation) - oracle.J(current)
                accepted = decrease <= required
        if accepted:
            assert search is not None
            x = search.x
            current = search.evaluation  # type: ignore[assignment]
            records.append(
                IterateRecord(
                    iteration=iteration,
                    kind="step",
                    level=level,
                    delta=mp.delta(level),
                    value=current.value,
                    alpha=search.alpha,
                    trials=search.m,
                    decrease=decrease,
                    required=required,
                    displacement=displacement,
                    inner_steps=search.inner_steps,
                    wall_time=time.perf_counter() - start,
                )
            )
        else:
            stuck = search is not None and (search.failed or search.evaluation is current)
            if stuck and mp.delta(level) <= mp.min_delta:
                assert displacement is not None
                stalled = True
                converged = displacement <= mp.stall_factor * mp.tol
                logger.warning(
                    "Line search failed at the precision floor %.1e with displacement %.3e",
                    mp.min_delta,
                    displacement,
                )
                break
            if level >= mp.max_level:
                logger.warning("Precision level cap %d reached", mp.max_level)
                break
            previous = current
            level += 1
            current = oracle.evaluate(x, mp.inner_precision(level), previous.handle)
            constant = abs(current.value - previous.value) / mp.delta(level - 1)
            logger.debug(
                "Refining to level %d (line search %s, decrease %s)",
                level,
                "skipped" if search is None else "failed" if search.failed else "ok",
                decrease,
            )
            records.append(
                IterateRecord(
                    iteration=iteration,
                    kind="refine",
                    level=level,
                    delta=mp.delta(level),
                    value=current.value,
                    trials=None if search is None else search.m,
                    decrease=decrease,
                    required=required,
                    displacement=displacement,
                    inner_steps=current.inner_steps + (0 if search is None else search.inner_steps),
                    approximation_constant=constant,
                    wall_time=time.perf_counter() - start,
                )
            )
        progress.update(task, advance=1, value=current.value, level=level)

    if alpha0 is None:
        alpha0 = initial_step(ap, oracle.g(current))
    records.append(
        IterateRecord(
            iteration=len(records),
            kind="stop",
            level=level,
            delta=mp.delta(level),
            value=current.value,
            displacement=projected_displacement(x, oracle.g(current), alpha0),
            wall_time=time.perf_counter() - start,
        )
    )
    if converged:
        logger.info("Master loop converged at level %d with value %.10g", level, current.value)
    else:
        logger.warning("Master loop stopped before convergence at level %d", level)
    return Trajectory(
        x=x,
        value=current.value,
        converged=converged,
        records=records,
        final=current,
        heuristic=adapter.heuristic,
        method="master",
        alpha0=alpha0,
        stalled=stalled,
    )


def fixed_precision_gradient(
    x0: np.ndarray,
    adapter: ProblemAdapter,
    eps: float,
    ap: ArmijoParams = ArmijoParams(),
    max_outer: int = 1000,
    progress=None,
    stall_factor: float = 10.0,
) -> Trajectory:
    """
    Projected gradient where every evaluation runs the inner solver to the fixed precision
    ``eps``, hot-started from the previous one. Stops when the projected displacement is at most
    ``eps``, or when the line search fails. A failed search still counts as converged when the
    displacement is at most ``stall_factor * eps``.
    """
    if eps <= 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    progress = progress or QuietProgress()
    oracle = _Oracle(adapter)
    start = time.perf_counter()
    x = adapter.project(np.asarray(x0, dtype=float))
    current = oracle.evaluate(x, eps)
    alpha0 = initial_step(ap, oracle.g(current))
    records = [
        IterateRecord(
            iteration=0,
            kind="start",
            level=0,
            delta=eps,
            value=current.value,
            inner_steps=current.inner_steps,
            wall_time=time.perf_counter() - start,
        )
    ]
    task = progress.add_task("fixed precision", total=max_outer, value=current.value, level=0)
    exact_params = ArmijoParams(
        sigma=ap.sigma,
        alpha0=alpha0,
        beta=ap.beta,
        trial_base=ap.max_trials,
        rescale=False,
        max_trials=ap.max_trials,
    )
    stalled = False
    converged = False
    for iteration in range(1, max_outer + 1):
        displacement = projected_displacement(x, oracle.g(current), alpha0)
        if displacement <= eps:
            converged = True
            break
        search = approx_armijo(x, 0, adapter, exact_params, current=current, delta=eps)
        if search.failed or search.evaluation is current:
            records.append(
                IterateRecord(
                    iteration=iteration,
                    kind="stop",
                    level=0,
                    delta=eps,
                    value=current.value,
                    displacement=displacement,
                    inner_steps=search.inner_steps,
                    wall_time=time.perf_counter() - start,
                )
            )
            stalled = True
            converged = displacement <= stall_factor * eps
            logger.warning("Line search failed at fixed precision %.3e", eps)
            break
        x = search.x
        current = search.evaluation  # type: ignore[assignment]
        records.append(
            IterateRecord(
                iteration=iteration,
                kind="step",
                level=0,
                delta=eps,
                value=current.value,
                alpha=search.alpha,
                trials=search.m,
                displacement=displacement,
                inner_steps=search.inner_steps,
                wall_time=time.perf_counter() - start,
            )
        )
        progress.update(task, advance=1, value=current.value, level=0)
    return Trajectory(
        x=x,
        value=current.value,
        converged=converged,
        records=records,
        final=current,
        heuristic=False,
        method="fixed-precision",
        alpha0=alpha0,
        stalled=stalled,
    )


def estimate_approximation_constant(trajectory: Trajectory) -> Optional[float]:
    """
    The smallest ``K`` with ``|J_{n+1}(x) - J_n(x)| <= K Delta(n)`` over all precision
    refinements of the trajectory.
    """
    constants = [
        r.approximation_constant for r in trajectory.records if r.approximation_constant is not None
    ]
    return max(constants) if constants else None


def write_trajectory(trajectory: Trajectory, path: PathOrStr) -> None:
    """
    Write one JSON record per line, including wall times.
    """
    with AtomicFile(path) as handle:
        for record in trajectory.records:
            handle.write(dumps_line(asdict(record)))
