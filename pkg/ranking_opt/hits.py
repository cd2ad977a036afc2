"""
HITS authority kernels: the shifted matrix ``A^T A + xi e e^T`` as an implicit operator, the
chain rule from the iterated matrix back to the adjacency matrix, threshold analysis of
stationary points and the rounding heuristic.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from .common import NonConvergenceError
from .graph import LinkGraph
from .spectral import LowRankGradient, MatrixLike

logger = logging.getLogger(__name__)

ACTIVATE = "activate"
DEACTIVATE = "deactivate"
INDIFFERENT = "indifferent"


def hits_matvec(A: MatrixLike, xi: float, x: np.ndarray) -> np.ndarray:
    """
    ``(A^T A + xi e e^T) @ x`` computed as ``A^T (A x) + xi (e . x) e``.
    """
    op = aslinearoperator(A)
    x = np.ravel(x)
    return op.rmatvec(op.matvec(x)) + xi * x.sum() * np.ones(x.size)


def hits_operator(A: MatrixLike, xi: float) -> LinearOperator:
    """
    The symmetric operator ``A^T A + xi e e^T``.
    """
    n = A.shape[0]

    def matvec(x):
        return hits_matvec(A, xi, x)

    return LinearOperator((n, n), matvec=matvec, rmatvec=matvec, dtype=float)


def hits_dense(A: MatrixLike, xi: float) -> np.ndarray:
    A = A.toarray() if hasattr(A, "toarray") else np.asarray(A, dtype=float)
    n = A.shape[0]
    return A.T @ A + xi * np.ones((n, n))


def hits_chain_gradient(A: MatrixLike, u: np.ndarray, w: np.ndarray) -> LowRankGradient:
    """
    Map the derivative ``w u^T`` with respect to ``A^T A + xi e e^T`` to the derivative with
    respect to ``A``, which is ``(A w) u^T + (A u) w^T``.
    """
    op = aslinearoperator(A)
    return LowRankGradient.outer(op.matvec(w), u) + LowRankGradient.outer(op.matvec(u), w)


def classify(gradient: np.ndarray, tol: float, maximize: bool = True) -> Tuple[str, ...]:
    """
    Classify facultative arcs by the sign of the objective gradient.
    """
    if not maximize:
        gradient = -gradient
    return tuple(
        ACTIVATE if value > tol else DEACTIVATE if value < -tol else INDIFFERENT
        for value in gradient
    )


@dataclass(frozen=True)
class ThresholdReport:
    """
    Threshold structure of a stationary point.

    For HITS, arc ``(i, j)`` is worth activating when ``scores[j] > cutoffs[i]``, with
    ``scores = w / u`` and ``cutoffs[i] = -(A w)_i / (A u)_i``. For HOTS, arc ``(i, j)`` is worth
    activating when ``scores[j] < cutoffs[i]``, with ``scores = w`` and
    ``cutoffs[i] = w_i + shift``.
    """

    cutoffs: Dict[int, Optional[float]]
    """
    Per controlled page. ``None`` when the page currently has no outlink.
    """

    scores: np.ndarray
    gradient: np.ndarray
    """
    Gradient of the objective on the facultative arcs.
    """

    classes: Tuple[str, ...]
    order: Tuple[int, ...]
    """
    Nodes sorted from most to least preferred link target.
    """

    shift: Optional[float] = None

    def violations(self, x: Sequence[float], tol: float = 1e-9) -> List[int]:
        """
        Indices of facultative arcs whose weight contradicts their classification.
        """
        x = np.asarray(x, dtype=float)
        return [
            k
            for k, label in enumerate(self.classes)
            if (label == ACTIVATE and x[k] < 1.0 - tol) or (label == DEACTIVATE and x[k] > tol)
        ]

    def to_dict(self, g: LinkGraph, x: Optional[Sequence[float]] = None) -> dict:
        arcs = []
        for k, (i, j) in enumerate(g.facultative):
            record = {
                "source": i,
                "target": j,
                "gradient": float(self.gradient[k]),
                "class": self.classes[k],
            }
            if x is not None:
                record["weight"] = float(x[k])
            arcs.append(record)
        return {
            "cutoffs": {str(i): b for i, b in sorted(self.cutoffs.items())},
            "scores": [float(s) for s in self.scores],
            "order": list(self.order),
            "shift": self.shift,
            "arcs": arcs,
        }


def threshold_report(
    g: LinkGraph,
    A: MatrixLike,
    u: np.ndarray,
    w: np.ndarray,
    tol: float = 1e-8,
) -> ThresholdReport:
    """
    Compute ``b_i = -(A w)_i / (A u)_i`` for every controlled page, the scores ``w_j / u_j`` and
    the classification of every facultative arc at a (near) stationary point.

    A page with no outlink has no cutoff, and all its facultative arcs have a vanishing gradient,
    so they are classified as indifferent.
    """
    op = aslinearoperator(A)
    Au = op.matvec(u)
    Aw = op.matvec(w)
    cutoffs: Dict[int, Optional[float]] = {}
    for i in sorted(g.controlled_pages()):
        cutoffs[i] = None if Au[i] <= 0 else float(-Aw[i] / Au[i])
    scores = w / u
    gradient = hits_chain_gradient(A, u, w).restrict(g.facultative_rows, g.facultative_cols)
    return ThresholdReport(
        cutoffs=cutoffs,
        scores=scores,
        gradient=gradient,
        classes=classify(gradient, tol),
        order=tuple(int(j) for j in np.argsort(-scores, kind="stable")),
    )


@dataclass(frozen=True)
class RoundingResult:
    x: np.ndarray
    value: float
    sweep: Tuple[Tuple[float, Optional[float], int], ...]
    """
    ``(threshold, value, active arcs)`` for every distinct binary vector tried. The value is
    ``None`` for a candidate whose ranking could not be computed.
    """

    relaxed_value: Optional[float] = None

    @property
    def gap(self) -> Optional[float]:
        """
        Relative distance between the rounded and the relaxed value.
        """
        if self.relaxed_value is None or self.relaxed_value == 0:
            return None
        return abs(self.relaxed_value - self.value) / abs(self.relaxed_value)


def round_heuristic(
    g: LinkGraph,
    x_star: Sequence[float],
    value: Callable[[np.ndarray], float],
    maximize: bool = True,
    relaxed_value: Optional[float] = None,
) -> RoundingResult:
    """
    Turn a relaxed solution into a 0-1 solution by selecting the best threshold.

    For ``t`` in ``{0+} U {distinct positive weights of x_star} U {1}``, the candidate sets to 1
    every weight ``>= t`` (``> 0`` for ``0+``) and the others to 0. Each distinct candidate is
    evaluated once with ``value`` and the best one is returned with the whole sweep.

    A candidate whose evaluation raises :class:`~ranking_opt.common.NonConvergenceError` is kept
    in the sweep without a value and skipped.

    Raises
    ------
    ``NonConvergenceError``
        If no candidate could be evaluated.
    """
    x_star = np.asarray(x_star, dtype=float)
    if x_star.shape != (g.num_facultative,):
        raise ValueError(
            f"weight vector has shape {x_star.shape}, expected ({g.num_facultative},)"
        )
    positive = sorted(set(float(v) for v in x_star if v > 0) | {1.0})
    candidates = [(0.0, (x_star > 0).astype(float))]
    candidates += [(t, (x_star >= t).astype(float)) for t in positive]

    seen = set()
    sweep: List[Tuple[float, Optional[float], int]] = []
    last_error: Optional[NonConvergenceError] = None
    best: Optional[Tuple[float, np.ndarray]] = None
    for t, x in candidates:
        key = x.tobytes()
        if key in seen:
            continue
        seen.add(key)
        try:
            v = float(value(x))
        except NonConvergenceError as err:
            logger.warning("Rounding threshold %.6g skipped: %s", t, err)
            sweep.append((t, None, int(x.sum())))
            last_error = err
            continue
        sweep.append((t, v, int(x.sum())))
        logger.debug("Rounding threshold %.6g: value %.10g with %d active arcs", t, v, x.sum())
        if best is None or (v > best[0] if maximize else v < best[0]):
            best = (v, x)
    if best is None:
        assert last_error is not None
        raise last_error
    if relaxed_value is not None:
        logger.info(
            "Rounded value %.10g vs relaxed value %.10g (gap %.3g%%)",
            best[0],
            relaxed_value,
            100.0 * abs(relaxed_value - best[0]) / max(abs(relaxed_value), 1e-300),
        )
    return RoundingResult(
        x=best[1], value=best[0], sweep=tuple(sweep), relaxed_value=relaxed_value
    )
