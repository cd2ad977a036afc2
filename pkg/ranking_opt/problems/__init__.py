from typing import Any, Dict, Set, Type

from ..graph import LinkGraph
from .adapter import Evaluation, EvaluationCounters, ProblemAdapter
from .hits import HitsProblem
from .hots import HotsProblem
from .perron import PerronProblem, dense_perron

__all__ = [
    "Evaluation",
    "EvaluationCounters",
    "ProblemAdapter",
    "PerronProblem",
    "HitsProblem",
    "HotsProblem",
    "dense_perron",
    "add_problem",
    "get_problem",
    "get_supported_problems",
]


_NAME_TO_PROBLEM: Dict[str, Type[ProblemAdapter]] = {}


def add_problem(problem: Type[ProblemAdapter]) -> None:
    """
    Add a new :class:`ProblemAdapter`.

    This can be used to extend the CLI and the benchmark harness to custom ranking problems,
    or to handle existing ones differently.
    """
    global _NAME_TO_PROBLEM
    if not problem.name:
        raise ValueError(f"{problem} has no name")
    _NAME_TO_PROBLEM[problem.name] = problem


for problem in (PerronProblem, HitsProblem, HotsProblem):
    add_problem(problem)  # type: ignore


def get_problem(name: str, graph: LinkGraph, **kwargs: Any) -> ProblemAdapter:
    """
    Instantiate the problem registered under ``name`` for ``graph``.
    """
    try:
        cls = _NAME_TO_PROBLEM[name]
    except KeyError:
        raise ValueError(
            f"unknown problem {name!r}, choose one of {sorted(get_supported_problems())}"
        )
    return cls(graph, **kwargs)


def get_supported_problems() -> Set[str]:
    """
    Return the names of all registered problems.
    """
    return set(_NAME_TO_PROBLEM.keys())
