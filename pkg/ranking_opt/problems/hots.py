import logging
from dataclasses import replace
from typing import Any, Dict, Optional

import numpy as np

from ..common import check_dense_size
from ..functions import FunctionSpec, Objective, get_objective
from ..graph import LinkGraph
from ..hits import ThresholdReport
from ..hots import (
    HotsConfig,
    HotsState,
    hessian_dense,
    hots_aux_w,
    hots_gradient,
    hots_solve,
    hots_threshold_report,
)
from .adapter import Evaluation, ProblemAdapter

logger = logging.getLogger(__name__)


class HotsProblem(ProblemAdapter):
    """
    Maximize ``f(p)`` where ``p`` is the HOTS vector of ``A(x)``, normalized by ``N(p) = 0``.

    The inner precision ``delta`` is used both as the tolerance on ``|grad theta(p)|_inf`` and on
    the residual of the auxiliary vector. There is no certified error bound for these, so runs
    of the coupled master loop on this problem are heuristic.
    """

    name = "hots"
    heuristic = True

    def __init__(
        self,
        graph: LinkGraph,
        config: Optional[HotsConfig] = None,
        objective: str = "exp-sum",
    ) -> None:
        super().__init__(graph)
        if config is None:
            config = HotsConfig(target=graph.target_set)
        elif not config.target:
            config = replace(config, target=graph.target_set)
        self.config = config
        self.normalization = config.normalizer(graph.n)
        spec = FunctionSpec(n=graph.n, target=set(graph.target_set))
        self.objective: Objective = get_objective(objective, spec, self.normalization)
        self.objective_name = objective

    def _finish(
        self, x: np.ndarray, A, state: HotsState, w: np.ndarray, delta: Optional[float], info: dict
    ) -> Evaluation:
        gradient = hots_gradient(state.p, w, A, self.config)
        return Evaluation(
            x=x,
            value=self.objective.value(state.p),
            gradient=gradient.restrict(self.graph.facultative_rows, self.graph.facultative_cols),
            inner_steps=info.pop("inner_steps"),
            delta=delta,
            handle=replace(state, w=w),
            diagnostics={"residual": state.residual, "damped_steps": state.damped_steps, **info},
        )

    def _evaluate(self, x: np.ndarray, delta: float, hot_start: Any) -> Evaluation:
        previous = hot_start if isinstance(hot_start, HotsState) else None
        A = self.matrix(x)
        state = hots_solve(
            None if previous is None else previous.p, A, replace(self.config, tol=delta)
        )
        w, mode, products = hots_aux_w(
            state.p,
            A,
            self.config,
            self.objective.grad(state.p),
            self.normalization.grad(state.p),
            tol=delta,
            w0=None if previous is None else previous.w,
        )
        return self._finish(
            x, A, state, w, delta, {"mode": mode, "inner_steps": state.iterations + products}
        )

    def evaluate_exact(self, x: np.ndarray) -> Evaluation:
        """
        Fixed point solved to ``1e-12`` and the auxiliary vector from the dense pseudo-inverse of
        the Hessian.
        """
        x = np.asarray(x, dtype=float)
        check_dense_size(self.graph.n)
        A = self.matrix(x)
        state = hots_solve(None, A, replace(self.config, tol=1e-12))
        grad_f = self.objective.grad(state.p)
        rhs = -grad_f + grad_f.sum() * self.normalization.grad(state.p)
        w = rhs @ np.linalg.pinv(hessian_dense(state.p, A, self.config), hermitian=True)
        w -= w.mean()
        self.counters.evaluations += 1
        return self._finish(x, A, state, w, None, {"mode": "dense", "inner_steps": 0})

    def scores(self, evaluation: Evaluation) -> np.ndarray:
        return evaluation.handle.scores

    def threshold_report(self, evaluation: Evaluation, tol: float = 1e-8) -> ThresholdReport:
        state: HotsState = evaluation.handle
        A = self.matrix(evaluation.x)
        return hots_threshold_report(self.graph, A, state.p, state.w, self.config, tol)

    def describe(self) -> Dict[str, Any]:
        return {
            **super().describe(),
            "alpha": self.config.alpha,
            "normalization": self.config.normalization,
            "objective": self.objective_name,
            "precondition": self.config.precondition,
        }
