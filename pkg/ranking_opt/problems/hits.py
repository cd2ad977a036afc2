from typing import Any, Dict, Optional

import numpy as np

from ..common import DEFAULT_XI, ConfigurationError
from ..graph import LinkGraph, SparseMatrix
from ..hits import ThresholdReport, hits_chain_gradient, hits_dense, hits_operator, threshold_report
from ..spectral import ChainRule, LowRankGradient, MatrixLike, PerronState
from .adapter import Evaluation
from .perron import PerronProblem


class HitsProblem(PerronProblem):
    """
    The relaxed HITS authority optimization problem: maximize ``f(u)`` where ``u`` is the Perron
    vector of ``A(x)^T A(x) + xi e e^T`` normalized by ``N``.

    With ``xi > 0`` the iterated matrix is positive for every admissible weight vector, hence
    irreducible and aperiodic.
    """

    name = "hits"

    def __init__(
        self,
        graph: LinkGraph,
        xi: float = DEFAULT_XI,
        objective: str = "sum-of-squares",
        normalization: str = "l2",
        iteration_cap: Optional[int] = None,
        symmetric: bool = True,
    ) -> None:
        if xi <= 0:
            raise ConfigurationError(f"xi must be positive for HITS, got {xi}")
        super().__init__(
            graph,
            xi=xi,
            objective=objective,
            normalization=normalization,
            iteration_cap=iteration_cap,
        )
        self.symmetric = symmetric  # type: ignore[misc]

    def operator(self, A: SparseMatrix) -> MatrixLike:
        return hits_operator(A, self.xi)

    def _dense(self, A: SparseMatrix) -> np.ndarray:
        return hits_dense(A, self.xi)

    def chain(self, A: SparseMatrix) -> ChainRule:
        def chain(state: PerronState) -> LowRankGradient:
            return hits_chain_gradient(A, state.u, state.w)

        return chain

    def threshold_report(self, evaluation: Evaluation, tol: float = 1e-8) -> ThresholdReport:
        state: PerronState = evaluation.handle
        A = self.matrix(evaluation.x)
        return threshold_report(self.graph, A, state.u, state.w, tol)

    def describe(self) -> Dict[str, Any]:
        return {**super().describe(), "symmetric": self.symmetric}
