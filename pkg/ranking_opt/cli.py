"""
The ``ranking-opt`` command line tool.

Every subcommand builds a :class:`JobConfig` from its flags, applies the overrides of an optional
JSON config file and writes its artifacts to ``--output-dir`` through a
:class:`~ranking_opt.bundle.ResultBundle`.

Exit codes: 0 on success, 1 on usage, parse and I/O errors, 2 on numerical non-convergence.
"""

import argparse
import dataclasses
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from rich.console import Console
from rich.logging import RichHandler

from . import bundle
from .benchmark import STRATEGIES, run_benchmark
from .common import (
    DEFAULT_ALPHA,
    DEFAULT_XI,
    ConfigurationError,
    NonConvergenceError,
    RankingOptError,
    default_iteration_cap,
    get_dense_oracle_cap,
)
from .graph import LinkGraph, example_site, load_graph, load_weights, serialize_weights
from .hits import round_heuristic
from .hots import HotsConfig, hessian_matvec, hots_solve, primal_flow
from .oracles import certified_eigen_bound, drazin_dense, eigenprojector
from .optimizer import (
    ArmijoParams,
    MasterParams,
    Trajectory,
    fixed_precision_gradient,
    master_optimize,
)
from .problems import (
    HotsProblem,
    PerronProblem,
    ProblemAdapter,
    get_problem,
    get_supported_problems,
)
from .progress import get_optimization_progress
from .spectral import PerronState, empirical_rate, power_derivative_step, power_iterate
from .synthetic import random_strongly_connected, random_weights, scale_free
from .version import VERSION

logger = logging.getLogger("ranking_opt")

COMMANDS = ("rank", "optimize", "round", "bench", "verify")
METHODS = ("master", "fixed-precision")
START_VECTORS = ("ones", "zeros", "half", "random")
SYNTHETIC_GRAPHS = ("strongly-connected", "scale-free")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NON_CONVERGENCE = 2

_GRADIENT_CHECK_COORDINATES = 20


@dataclass(frozen=True)
class JobConfig:
    command: str = "optimize"
    graph: Optional[str] = None
    """
    Path of the graph document. Without it, a synthetic graph is generated when
    :attr:`synthetic` is set, and the bundled 21-page example site is used otherwise.
    """

    weights: Optional[str] = None
    """
    Path of a weights document, used as the starting point or as the weights to rank with.
    """

    algorithm: str = "hits"
    objective: Optional[str] = None
    normalization: Optional[str] = None
    xi: float = DEFAULT_XI
    alpha: float = DEFAULT_ALPHA
    precondition: bool = False
    method: str = "master"
    eps: float = 1e-10
    """
    Inner precision of the fixed-precision method.
    """

    rank_tol: float = 1e-12
    max_iter: Optional[int] = None
    """
    Cap on power and fixed-point steps per ranking solve. Default: ``10 n + 1000``.
    """

    threshold_tol: float = 1e-8
    start: str = "ones"
    """
    Starting weights when no weights file is given.
    """

    synthetic: Optional[str] = None
    nodes: int = 50
    facultative: int = 100
    seed: int = 0
    output_dir: str = "ranking-opt-output"
    strategies: Tuple[str, ...] = STRATEGIES
    armijo: Mapping[str, Any] = field(default_factory=dict)
    """
    Overrides for :class:`~ranking_opt.optimizer.ArmijoParams`.
    """

    master: Mapping[str, Any] = field(default_factory=dict)
    """
    Overrides for :class:`~ranking_opt.optimizer.MasterParams`.
    """

    def __post_init__(self):
        object.__setattr__(self, "strategies", tuple(self.strategies))
        object.__setattr__(self, "armijo", dict(self.armijo))
        object.__setattr__(self, "master", dict(self.master))
        for name, value, choices in (
            ("command", self.command, COMMANDS),
            ("algorithm", self.algorithm, tuple(sorted(get_supported_problems()))),
            ("method", self.method, METHODS),
            ("start", self.start, START_VECTORS),
        ):
            if value not in choices:
                raise ConfigurationError(f"{name} must be one of {list(choices)}, got {value!r}")
        if self.synthetic is not None and self.synthetic not in SYNTHETIC_GRAPHS:
            raise ConfigurationError(
                f"synthetic must be one of {list(SYNTHETIC_GRAPHS)}, got {self.synthetic!r}"
            )
        for strategy in self.strategies:
            if strategy not in STRATEGIES:
                raise ConfigurationError(f"unknown strategy {strategy!r}")
        if self.eps <= 0 or self.rank_tol <= 0 or self.threshold_tol <= 0:
            raise ConfigurationError("eps, rank_tol and threshold_tol must be positive")
        if self.xi < 0:
            raise ConfigurationError(f"xi must be nonnegative, got {self.xi}")
        if not 0.5 < self.alpha < 1.0:
            raise ConfigurationError(f"alpha must lie strictly inside (1/2, 1), got {self.alpha}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ConfigurationError(f"max_iter must be positive, got {self.max_iter}")
        if self.nodes < 2 or self.facultative < 0:
            raise ConfigurationError("nodes must be at least 2 and facultative nonnegative")
        # Build both parameter groups once so their own range checks run now.
        self.armijo_params()
        self.master_params()

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "JobConfig":
        _check_keys(data, cls, "job config")
        return cls(**data)

    def with_overrides(self, data: Mapping[str, Any]) -> "JobConfig":
        _check_keys(data, JobConfig, "job config")
        return dataclasses.replace(self, **data)

    def armijo_params(self) -> ArmijoParams:
        _check_keys(self.armijo, ArmijoParams, "armijo section")
        return ArmijoParams(**self.armijo)

    def master_params(self) -> MasterParams:
        _check_keys(self.master, MasterParams, "master section")
        return MasterParams(**self.master)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _check_keys(data: Mapping[str, Any], cls, what: str) -> None:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown keys in {what}: {', '.join(unknown)}")


def load_config_file(path: str) -> Dict[str, Any]:
    config_path = Path(path)
    if not config_path.is_file():
        raise FileNotFoundError(f"config file {config_path} not found")
    try:
        data = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ConfigurationError(f"config file {config_path} is not valid JSON: {err}")
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {config_path} must hold a JSON object")
    return data


def load_job_graph(cfg: JobConfig) -> LinkGraph:
    if cfg.graph is not None:
        return load_graph(cfg.graph)
    if cfg.synthetic == "strongly-connected":
        return random_strongly_connected(cfg.nodes, cfg.facultative, seed=cfg.seed)
    if cfg.synthetic == "scale-free":
        return scale_free(cfg.nodes, cfg.facultative, seed=cfg.seed)
    return example_site()


def starting_weights(cfg: JobConfig, graph: LinkGraph) -> np.ndarray:
    if cfg.weights is not None:
        return load_weights(cfg.weights, graph)
    k = graph.num_facultative
    if cfg.start == "ones":
        return np.ones(k)
    if cfg.start == "zeros":
        return np.zeros(k)
    if cfg.start == "half":
        return np.full(k, 0.5)
    return random_weights(graph, seed=cfg.seed)


def make_problem(cfg: JobConfig, graph: LinkGraph) -> ProblemAdapter:
    kwargs: Dict[str, Any] = {}
    if cfg.objective is not None:
        kwargs["objective"] = cfg.objective
    if cfg.algorithm == HotsProblem.name:
        kwargs["config"] = HotsConfig(
            alpha=cfg.alpha,
            normalization=cfg.normalization or "lse-zero",
            target=graph.target_set,
            precondition=cfg.precondition,
            max_iter=cfg.max_iter,
        )
    else:
        kwargs["xi"] = cfg.xi
        kwargs["iteration_cap"] = cfg.max_iter
        if cfg.normalization is not None:
            kwargs["normalization"] = cfg.normalization
    return get_problem(cfg.algorithm, graph, **kwargs)


def _graph_summary(graph: LinkGraph) -> Dict[str, int]:
    return {
        "controlled": len(graph.controlled_pages()),
        "facultative": graph.num_facultative,
        "n": graph.n,
        "obligatory": len(graph.obligatory),
        "targets": len(graph.target_set),
    }


def _require_facultative(graph: LinkGraph) -> None:
    if graph.num_facultative == 0:
        raise ConfigurationError("nothing to optimize: the graph has no facultative arcs")


def cmd_rank(cfg: JobConfig) -> int:
    start = time.perf_counter()
    graph = load_job_graph(cfg)
    x = starting_weights(cfg, graph)
    problem = make_problem(cfg, graph)
    A = problem.matrix(x)
    summary: Dict[str, Any] = {
        "command": "rank",
        "config": cfg.to_dict(),
        "graph": _graph_summary(graph),
        "problem": problem.describe(),
    }
    if isinstance(problem, HotsProblem):
        state = hots_solve(None, A, dataclasses.replace(problem.config, tol=cfg.rank_tol))
        values = state.scores
        flow = primal_flow(state.p, A, problem.config)
        summary.update(
            damped_steps=state.damped_steps,
            iterations=state.iterations,
            primal_residual=flow.max_residual,
            residual=state.residual,
        )
    else:
        assert isinstance(problem, PerronProblem)
        result = power_iterate(
            problem.operator(A), problem.normalization, tol=cfg.rank_tol, max_iter=cfg.max_iter
        )
        values = result.u
        summary.update(iterations=result.iterations, residual=result.residual, rho=result.rho)
    with bundle.ResultBundle(cfg.output_dir) as out:
        out.write_vector(bundle.SCORES_FILE, values)
        out.write_summary(summary)
        out.write_timings({"total": time.perf_counter() - start})
    logger.info("Ranked %d pages with %s", graph.n, problem.name)
    return EXIT_OK


def _optimize(cfg: JobConfig, problem: ProblemAdapter, x0: np.ndarray, quiet: bool) -> Trajectory:
    with get_optimization_progress(quiet) as progress:
        if cfg.method == "master":
            return master_optimize(
                x0, problem, cfg.master_params(), cfg.armijo_params(), progress=progress
            )
        return fixed_precision_gradient(
            x0,
            problem,
            cfg.eps,
            cfg.armijo_params(),
            max_outer=cfg.master_params().max_outer,
            progress=progress,
            stall_factor=cfg.master_params().stall_factor,
        )


def _is_binary(x: np.ndarray) -> bool:
    return bool(np.all((x == 0.0) | (x == 1.0)))


def cmd_optimize(cfg: JobConfig, quiet: bool = False) -> int:
    start = time.perf_counter()
    graph = load_job_graph(cfg)
    _require_facultative(graph)
    problem = make_problem(cfg, graph)
    trajectory = _optimize(cfg, problem, starting_weights(cfg, graph), quiet)
    elapsed = time.perf_counter() - start
    counters = problem.counters.to_dict()
    assert trajectory.final is not None
    # Below stationarity / alpha0 a gradient does not force its arc to a bound.
    stationarity = cfg.master_params().tol if cfg.method == "master" else cfg.eps
    report = problem.threshold_report(
        trajectory.final, max(cfg.threshold_tol, stationarity / trajectory.alpha0)
    )
    violations = report.violations(trajectory.x, stationarity)
    if violations:
        logger.warning("%d facultative arcs violate the threshold property", len(violations))
    summary = {
        "armijo": asdict(cfg.armijo_params()),
        "binary": _is_binary(trajectory.x),
        "command": "optimize",
        "config": cfg.to_dict(),
        "counters": counters,
        "graph": _graph_summary(graph),
        "master": asdict(cfg.master_params()),
        "problem": problem.describe(),
        "threshold_violations": len(violations),
        "trajectory": trajectory.summary(),
    }
    with bundle.ResultBundle(cfg.output_dir) as out:
        out.write_text(bundle.WEIGHTS_FILE, serialize_weights(graph, trajectory.x))
        out.write_vector(bundle.SCORES_FILE, problem.scores(trajectory.final))
        out.write_lines(bundle.TRAJECTORY_FILE, (asdict(r) for r in trajectory.records))
        out.write_json(bundle.THRESHOLDS_FILE, report.to_dict(graph, trajectory.x))
        out.write_summary(summary)
        out.write_timings({"optimize": elapsed, "total": time.perf_counter() - start})
    if not trajectory.converged:
        return EXIT_NON_CONVERGENCE
    return EXIT_OK


def _rounding_value(problem: ProblemAdapter, tol: float) -> Callable[[np.ndarray], float]:
    if problem.graph.n <= get_dense_oracle_cap():
        return lambda x: problem.evaluate_exact(x).value
    return lambda x: problem.value(x, tol)


def cmd_round(cfg: JobConfig, quiet: bool = False) -> int:
    start = time.perf_counter()
    graph = load_job_graph(cfg)
    _require_facultative(graph)
    problem = make_problem(cfg, graph)
    converged = True
    if cfg.weights is not None:
        x_star = load_weights(cfg.weights, graph)
    else:
        logger.info("No weights given, optimizing the relaxed problem first")
        trajectory = _optimize(cfg, problem, starting_weights(cfg, graph), quiet)
        x_star, converged = trajectory.x, trajectory.converged
    value = _rounding_value(problem, cfg.rank_tol)
    relaxed = value(x_star)
    result = round_heuristic(
        graph,
        x_star,
        value,
        maximize=problem.maximize,
        relaxed_value=relaxed,
    )
    rounding = {
        "best": {"active": int(result.x.sum()), "value": result.value},
        "gap": result.gap,
        "relaxed_value": relaxed,
        "sweep": [
            {"active": active, "threshold": threshold, "value": candidate}
            for threshold, candidate, active in result.sweep
        ],
    }
    with bundle.ResultBundle(cfg.output_dir) as out:
        out.write_text(bundle.WEIGHTS_FILE, serialize_weights(graph, result.x))
        out.write_json(bundle.ROUNDING_FILE, rounding)
        out.write_summary(
            {
                "command": "round",
                "config": cfg.to_dict(),
                "graph": _graph_summary(graph),
                "problem": problem.describe(),
                "relaxed_converged": converged,
                "rounding": rounding["best"],
            }
        )
        out.write_timings({"total": time.perf_counter() - start})
    return EXIT_OK if converged else EXIT_NON_CONVERGENCE


def cmd_bench(cfg: JobConfig, console: Optional[Console] = None) -> int:
    graph = load_job_graph(cfg)
    _require_facultative(graph)
    report = run_benchmark(
        lambda: make_problem(cfg, graph),
        starting_weights(cfg, graph),
        cfg.master_params(),
        cfg.armijo_params(),
        eps=cfg.eps,
        strategies=cfg.strategies,
    )
    (console or Console()).print(report.table())
    with bundle.ResultBundle(cfg.output_dir) as out:
        out.write_json(bundle.BENCH_FILE, report.to_dict())
        for strategy, trajectory in report.trajectories.items():
            out.write_lines(f"trajectory-{strategy}.jsonl", (asdict(r) for r in trajectory.records))
    if not report.converged or report.partial:
        return EXIT_NON_CONVERGENCE
    return EXIT_OK


def _gradient_check(problem: ProblemAdapter, x: np.ndarray, tol: float, h: float = 1e-6) -> float:
    """
    Largest relative error between the gradient and central differences, over the first few
    coordinates whose weights leave room for a step of ``h`` inside the box.
    """
    gradient = problem.evaluate(x, tol).gradient
    interior = np.flatnonzero((x >= h) & (x <= 1.0 - h))[:_GRADIENT_CHECK_COORDINATES]
    if interior.size == 0:
        return 0.0
    scale = max(1.0, float(np.max(np.abs(gradient[interior]))))
    errors = []
    for k in interior:
        step = np.zeros_like(x)
        step[k] = h
        fd = (problem.value(x + step, tol) - problem.value(x - step, tol)) / (2.0 * h)
        errors.append(abs(fd - gradient[k]) / scale)
    return float(max(errors))


def _coupled_rate(problem: PerronProblem, A, tol: float) -> Optional[float]:
    operator = problem.operator(A)
    state = PerronState.initial(problem.graph.n, problem.normalization)
    distances: List[float] = []
    cap = default_iteration_cap(problem.graph.n)
    for _ in range(cap):
        following = power_derivative_step(
            operator, problem.objective, problem.normalization, state, problem.symmetric
        )
        distances.append(following.distance(state))
        state = following
        if distances[-1] <= tol:
            break
    try:
        return empirical_rate(distances)
    except ValueError:
        logger.info("Too few coupled steps to estimate a convergence rate")
        return None


def cmd_verify(cfg: JobConfig) -> int:
    start = time.perf_counter()
    graph = load_job_graph(cfg)
    x = starting_weights(cfg, graph)
    problem = make_problem(cfg, graph)
    A = problem.matrix(x)
    report: Dict[str, Any] = {"problem": problem.describe(), "graph": _graph_summary(graph)}
    if isinstance(problem, HotsProblem):
        state = hots_solve(None, A, dataclasses.replace(problem.config, tol=cfg.rank_tol))
        flow = primal_flow(state.p, A, problem.config)
        ones = np.ones(graph.n)
        report["hots"] = {
            "fixed_point_residual": state.residual,
            "hessian_kernel_residual": float(
                np.max(np.abs(hessian_matvec(state.p, A, problem.config, ones)))
            ),
            "mass_residual": flow.mass_residual,
            "max_conservation_residual": float(np.max(np.abs(flow.conservation))),
            "alpha_residuals": list(flow.alpha_residuals),
        }
    else:
        assert isinstance(problem, PerronProblem)
        M = problem.dense_operator(x)
        result = power_iterate(
            problem.operator(A), problem.normalization, tol=cfg.rank_tol, max_iter=cfg.max_iter
        )
        bound = certified_eigen_bound(
            M, result.u, result.rho, problem.normalization.grad(result.u)
        )
        S = drazin_dense(M, result.rho)
        _, _, P = eigenprojector(M, result.rho)
        shifted = M - result.rho * np.eye(graph.n)
        identity = np.eye(graph.n)
        report["certified_bound"] = bound.to_dict()
        report["drazin"] = {
            "left": float(np.max(np.abs(S @ shifted - (identity - P)))),
            "right": float(np.max(np.abs(shifted @ S - (identity - P)))),
            "kernel": float(np.max(np.abs(S @ P))),
            "reflexive": float(np.max(np.abs(S @ shifted @ S - S))),
        }
        report["power"] = {"iterations": result.iterations, "residual": result.residual}
        report["coupled_rate"] = _coupled_rate(problem, A, cfg.rank_tol)
    if graph.num_facultative:
        report["gradient_check"] = _gradient_check(problem, x, cfg.rank_tol)
    with bundle.ResultBundle(cfg.output_dir) as out:
        out.write_json(bundle.VERIFY_FILE, report)
        out.write_summary({"command": "verify", "config": cfg.to_dict(), **report})
        out.write_timings({"total": time.perf_counter() - start})
    return EXIT_OK


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _ArgumentParser(add_help=False)
    common.add_argument("--graph", help="graph document; default: the bundled example site")
    common.add_argument("--weights", help="weights document for the facultative arcs")
    common.add_argument("--algorithm", choices=sorted(get_supported_problems()), default="hits")
    common.add_argument("--objective")
    common.add_argument("--normalization")
    common.add_argument("--xi", type=float, default=DEFAULT_XI)
    common.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    common.add_argument("--precondition", action="store_true")
    common.add_argument("--method", choices=METHODS, default="master")
    common.add_argument("--eps", type=float, default=1e-10)
    common.add_argument("--max-iter", type=int, help="cap on steps per ranking solve")
    common.add_argument("--start", choices=START_VECTORS, default="ones")
    common.add_argument("--synthetic", choices=SYNTHETIC_GRAPHS)
    common.add_argument("--nodes", type=int, default=50)
    common.add_argument("--facultative", type=int, default=100)
    common.add_argument("--strategies", nargs="+", choices=STRATEGIES, default=list(STRATEGIES))
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--output-dir", default="ranking-opt-output")
    common.add_argument("--config", help="JSON file whose keys override the flags")
    common.add_argument("--quiet", action="store_true", help="no progress display")
    common.add_argument("--verbose", action="store_true", help="log at DEBUG level")

    parser = _ArgumentParser(
        prog="ranking-opt", description="Optimize the ranking of web pages by link weights."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command, help_text in (
        ("rank", "compute the ranking vector for given weights"),
        ("optimize", "optimize the facultative link weights"),
        ("round", "turn relaxed weights into 0-1 weights"),
        ("bench", "compare the optimization strategies"),
        ("verify", "run the dense consistency checks at given weights"),
    ):
        subparsers.add_parser(command, parents=[common], help=help_text)
    return parser


def config_from_args(args: argparse.Namespace) -> JobConfig:
    cfg = JobConfig(
        command=args.command,
        graph=args.graph,
        weights=args.weights,
        algorithm=args.algorithm,
        objective=args.objective,
        normalization=args.normalization,
        xi=args.xi,
        alpha=args.alpha,
        precondition=args.precondition,
        method=args.method,
        eps=args.eps,
        max_iter=args.max_iter,
        start=args.start,
        synthetic=args.synthetic,
        nodes=args.nodes,
        facultative=args.facultative,
        strategies=tuple(args.strategies),
        seed=args.seed,
        output_dir=args.output_dir,
    )
    if args.config is not None:
        cfg = cfg.with_overrides(load_config_file(args.config))
    return cfg


def setup_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(show_path=False)],
        force=True,
    )


def run(cfg: JobConfig, quiet: bool = False) -> int:
    if cfg.command == "rank":
        return cmd_rank(cfg)
    if cfg.command == "optimize":
        return cmd_optimize(cfg, quiet)
    if cfg.command == "round":
        return cmd_round(cfg, quiet)
    if cfg.command == "bench":
        return cmd_bench(cfg)
    return cmd_verify(cfg)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        return run(config_from_args(args), quiet=args.quiet)
    except NonConvergenceError as err:
        logger.error("%s", err)
        return EXIT_NON_CONVERGENCE
    except (RankingOptError, OSError) as err:
        logger.error("%s", err)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
