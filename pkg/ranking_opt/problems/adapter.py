import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, ClassVar, Dict, Optional

import numpy as np

from ..graph import LinkGraph, SparseMatrix, assemble, project_box
from ..hits import ThresholdReport

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Evaluation:
    """
    The objective and its gradient on the facultative arcs at one weight vector, computed to a
    given inner precision.
    """

    x: np.ndarray
    value: float
    """
    Objective value, in the problem's own sense (see :attr:`ProblemAdapter.maximize`).
    """

    gradient: np.ndarray
    """
    Derivative of :attr:`value` with respect to each facultative weight.
    """

    inner_steps: int
    """
    Power-type steps (or fixed-point steps plus Hessian products) spent on this evaluation.
    """

    delta: Optional[float]
    """
    Inner precision, ``None`` for dense reference evaluations.
    """

    handle: Any = field(default=None, compare=False, repr=False)
    """
    Solver state used to hot-start the next evaluation.
    """

    diagnostics: Dict[str, Any] = field(default_factory=dict, compare=False)


@dataclass
class EvaluationCounters:
    evaluations: int = 0
    assemblies: int = 0
    inner_steps: int = 0

    def to_dict(self) -> Dict[str, int]:
        return {
            "assemblies": self.assemblies,
            "evaluations": self.evaluations,
            "inner_steps": self.inner_steps,
        }


class ProblemAdapter(ABC):
    """
    A ranking optimization problem over the facultative weights of a :class:`LinkGraph`, as seen
    by the optimizer.

    Subclasses must define :attr:`name` and implement :meth:`_evaluate()`,
    :meth:`evaluate_exact()`, :meth:`scores()` and :meth:`threshold_report()`.

    .. important::
        An adapter is owned by a single optimizer loop at a time. Its counters are mutated by
        every evaluation.
    """

    name: ClassVar[str] = ""

    maximize: ClassVar[bool] = True
    """
    Whether the objective is maximized. The optimizer minimizes ``-value`` in that case.
    """

    heuristic: ClassVar[bool] = False
    """
    Set for problems where the coupled master loop has no convergence guarantee.
    """

    def __init__(self, graph: LinkGraph) -> None:
        self.graph = graph
        self.counters = EvaluationCounters()

    @property
    def dimension(self) -> int:
        return self.graph.num_facultative

    def matrix(self, x: np.ndarray) -> SparseMatrix:
        self.counters.assemblies += 1
        return assemble(self.graph, x)

    def project(self, x: np.ndarray) -> np.ndarray:
        return project_box(x)

    def evaluate(self, x: np.ndarray, delta: float, hot_start: Any = None) -> Evaluation:
        """
        Evaluate the objective and its gradient at ``x`` to inner precision ``delta``.

        Raises
        ------
        ``NonConvergenceError``
            If the inner solver does not reach ``delta``. This is distinct from a line-search
            failure and is not caught by the optimizer.
        """
        evaluation = self._evaluate(np.asarray(x, dtype=float), delta, hot_start)
        self.counters.evaluations += 1
        self.counters.inner_steps += evaluation.inner_steps
        return evaluation

    @abstractmethod
    def _evaluate(self, x: np.ndarray, delta: float, hot_start: Any) -> Evaluation:
        raise NotImplementedError

    @abstractmethod
    def evaluate_exact(self, x: np.ndarray) -> Evaluation:
        """
        Reference evaluation by dense linear algebra, for small problems.

        Raises
        ------
        ``SpectralError``
            If the graph exceeds the dense oracle cap.
        """
        raise NotImplementedError

    def value(self, x: np.ndarray, delta: float = 1e-12) -> float:
        """
        Accurate objective value, used to compare candidate solutions.
        """
        return self.evaluate(x, delta).value

    @abstractmethod
    def scores(self, evaluation: Evaluation) -> np.ndarray:
        """
        The ranking vector at an evaluation.
        """
        raise NotImplementedError

    @abstractmethod
    def threshold_report(self, evaluation: Evaluation, tol: float = 1e-8) -> ThresholdReport:
        raise NotImplementedError

    def describe(self) -> Dict[str, Any]:
        return {"problem": self.name, "maximize": self.maximize}
