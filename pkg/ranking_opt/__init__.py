"""
**ranking-opt** optimizes the position of a set of web pages in a link-analysis ranking by choosing
the weights of the hyperlinks a webmaster controls.

A :class:`LinkGraph` splits the candidate hyperlinks into obligatory, prohibited and facultative
ones. The weights of the facultative hyperlinks live in ``[0, 1]`` and the rankings supported
out-of-the-box are a generic Perron vector, the HITS authority vector and the HOTS vector.
See :func:`master_optimize()` for the coupled gradient and power iteration, and
:func:`get_problem()` for the available problems.

You can also plug in other ranking problems with :func:`add_problem()`.
"""

from .common import (
    ConfigurationError,
    DegenerateStateError,
    GraphFormatError,
    NonConvergenceError,
    OutputLockedError,
    RankingOptError,
    SpectralError,
    get_dense_oracle_cap,
    set_dense_oracle_cap,
)
from .graph import (
    LinkGraph,
    assemble,
    example_site,
    example_site_weights,
    load_graph,
    load_weights,
    parse_graph,
    parse_weights,
    project_box,
    save_graph,
    save_weights,
    serialize_graph,
    serialize_weights,
)
from .hits import ThresholdReport, hits_matvec, round_heuristic
from .hots import HotsConfig, hots_gradient, hots_solve, primal_flow
from .optimizer import (
    ArmijoParams,
    MasterParams,
    Trajectory,
    approx_armijo,
    armijo_exact_step,
    fixed_precision_gradient,
    master_optimize,
    write_trajectory,
)
from .problems import (
    HitsProblem,
    HotsProblem,
    PerronProblem,
    ProblemAdapter,
    add_problem,
    get_problem,
    get_supported_problems,
)
from .progress import get_optimization_progress
from .spectral import LowRankGradient, PerronState, iterate_to_level, power_iterate

__all__ = [
    "ConfigurationError",
    "DegenerateStateError",
    "GraphFormatError",
    "NonConvergenceError",
    "OutputLockedError",
    "RankingOptError",
    "SpectralError",
    "get_dense_oracle_cap",
    "set_dense_oracle_cap",
    "LinkGraph",
    "assemble",
    "example_site",
    "example_site_weights",
    "load_graph",
    "load_weights",
    "parse_graph",
    "parse_weights",
    "project_box",
    "save_graph",
    "save_weights",
    "serialize_graph",
    "serialize_weights",
    "ThresholdReport",
    "hits_matvec",
    "round_heuristic",
    "HotsConfig",
    "hots_gradient",
    "hots_solve",
    "primal_flow",
    "ArmijoParams",
    "MasterParams",
    "Trajectory",
    "approx_armijo",
    "armijo_exact_step",
    "fixed_precision_gradient",
    "master_optimize",
    "write_trajectory",
    "HitsProblem",
    "HotsProblem",
    "PerronProblem",
    "ProblemAdapter",
    "add_problem",
    "get_problem",
    "get_supported_problems",
    "get_optimization_progress",
    "LowRankGradient",
    "PerronState",
    "iterate_to_level",
    "power_iterate",
]
