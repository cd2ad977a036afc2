from typing import Any, Dict, Optional, Tuple

import numpy as np
import scipy.linalg

from ..common import DEFAULT_XI, ConfigurationError, check_dense_size
from ..functions import (
    PERRON_NORMALIZATIONS,
    FunctionSpec,
    Normalization,
    Objective,
    get_normalization,
    get_objective,
)
from ..graph import LinkGraph, SparseMatrix
from ..hits import ThresholdReport, classify
from ..oracles import solve_bordered
from ..spectral import (
    ChainRule,
    MatrixLike,
    PerronState,
    assemble_J_g,
    identity_chain,
    iterate_to_level,
    perron_operator,
)
from .adapter import Evaluation, ProblemAdapter


def dense_perron(
    M: np.ndarray, normalization: Normalization
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Perron root and vectors of a small dense matrix, ``N(u) == 1`` and ``v @ u == 1``.
    """
    check_dense_size(M.shape[0])
    values, left, right = scipy.linalg.eig(M, left=True, right=True)
    k = int(np.argmax(values.real))
    u = np.abs(np.real(right[:, k]))
    v = np.abs(np.real(left[:, k]))
    u = u / normalization.value(u)
    v = v / (v @ u)
    return float(values[k].real), u, v


class PerronProblem(ProblemAdapter):
    """
    Optimize ``f(u)`` where ``u`` is the Perron vector of ``A(x) + xi e e^T``.

    The iterated matrix depends linearly on the weights, so the gradient on the facultative arc
    ``(i, j)`` is ``w_i u_j``.
    """

    name = "perron"
    symmetric = False

    def __init__(
        self,
        graph: LinkGraph,
        xi: float = DEFAULT_XI,
        objective: str = "linear",
        normalization: str = "l1",
        iteration_cap: Optional[int] = None,
        maximize: bool = True,
    ) -> None:
        super().__init__(graph)
        if xi < 0:
            raise ConfigurationError(f"xi must be nonnegative, got {xi}")
        if normalization not in PERRON_NORMALIZATIONS:
            raise ConfigurationError(
                f"unknown normalization {normalization!r} for a Perron problem, "
                f"choose one of {list(PERRON_NORMALIZATIONS)}"
            )
        self.xi = xi
        self.iteration_cap = iteration_cap
        self.maximize = maximize  # type: ignore[misc]
        spec = FunctionSpec(n=graph.n, target=set(graph.target_set))
        self.normalization: Normalization = get_normalization(normalization, spec)
        self.objective: Objective = get_objective(objective, spec, self.normalization)
        self.objective_name = objective
        self.normalization_name = normalization

    def operator(self, A: SparseMatrix) -> MatrixLike:
        return perron_operator(A, self.xi)

    def _dense(self, A: SparseMatrix) -> np.ndarray:
        dense = A.toarray()
        return dense + self.xi * np.ones_like(dense)

    def dense_operator(self, x: np.ndarray) -> np.ndarray:
        """
        The matrix whose Perron triple is ranked, as a dense array.
        """
        check_dense_size(self.graph.n)
        return self._dense(self.matrix(x))

    def chain(self, A: SparseMatrix) -> ChainRule:
        return identity_chain

    def _evaluate(self, x: np.ndarray, delta: float, hot_start: Any) -> Evaluation:
        state = hot_start if isinstance(hot_start, PerronState) else None
        if state is None:
            state = PerronState.initial(self.graph.n, self.normalization)
        A = self.matrix(x)
        state, steps = iterate_to_level(
            self.operator(A),
            self.objective,
            self.normalization,
            state,
            delta,
            cap=self.iteration_cap,
            symmetric=self.symmetric,
        )
        value, gradient = assemble_J_g(state, self.objective, self.chain(A))
        return Evaluation(
            x=x,
            value=value,
            gradient=gradient.restrict(self.graph.facultative_rows, self.graph.facultative_cols),
            inner_steps=steps,
            delta=delta,
            handle=state,
            diagnostics={"rho": state.rho},
        )

    def evaluate_exact(self, x: np.ndarray) -> Evaluation:
        x = np.asarray(x, dtype=float)
        A = self.matrix(x)
        M = self._dense(A)
        rho, u, v = dense_perron(M, self.normalization)
        w = solve_bordered(M, rho, u, self.normalization.grad(u), self.objective.grad(u))
        state = PerronState(u=u, v=v, w=w, rho=rho)
        value, gradient = assemble_J_g(state, self.objective, self.chain(A))
        self.counters.evaluations += 1
        return Evaluation(
            x=x,
            value=value,
            gradient=gradient.restrict(self.graph.facultative_rows, self.graph.facultative_cols),
            inner_steps=0,
            delta=None,
            handle=state,
            diagnostics={"rho": rho},
        )

    def scores(self, evaluation: Evaluation) -> np.ndarray:
        return evaluation.handle.u

    def threshold_report(self, evaluation: Evaluation, tol: float = 1e-8) -> ThresholdReport:
        # The gradient on (i, j) is w_i u_j with u > 0, so the sign of w_i decides every arc from i.
        state: PerronState = evaluation.handle
        gradient = evaluation.gradient
        return ThresholdReport(
            cutoffs={i: float(state.w[i]) for i in sorted(self.graph.controlled_pages())},
            scores=state.u.copy(),
            gradient=gradient,
            classes=classify(gradient, tol, self.maximize),
            order=tuple(int(j) for j in np.argsort(-state.u, kind="stable")),
        )

    def describe(self) -> Dict[str, Any]:
        return {
            **super().describe(),
            "normalization": self.normalization_name,
            "objective": self.objective_name,
            "xi": self.xi,
        }
