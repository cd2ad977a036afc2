"""
Perron eigenpairs and their derivatives by power-type iterations.

The coupled scheme advances three sequences at once: the right eigenvector ``u``, the left
eigenvector ``v`` (scaled so that ``v @ u == 1``) and an auxiliary row vector ``w`` whose limit
is ``(-grad f + (grad f . u) grad N) (M - rho I)^#``. The derivative of ``f(u(M))`` with respect
to ``M[i, j]`` is then ``w[i] * u[j]``.

Every matrix argument can be a scipy sparse matrix, a dense array or a
:class:`scipy.sparse.linalg.LinearOperator`. Only products ``M @ x`` and ``x @ M`` are used.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from .common import DegenerateStateError, NonConvergenceError, default_iteration_cap
from .functions import Normalization, Objective

logger = logging.getLogger(__name__)

MatrixLike = Union[np.ndarray, scipy.sparse.spmatrix, LinearOperator]

_TINY = 1e-300


@dataclass(frozen=True)
class PerronState:
    """
    One iterate of the coupled power and derivative scheme.
    """

    u: np.ndarray
    """
    Positive right vector with ``N(u) == 1``.
    """

    v: np.ndarray
    """
    Left vector with ``v @ u == 1``.
    """

    w: np.ndarray
    """
    Auxiliary row vector. Orthogonal to ``u`` after every step.
    """

    rho: float
    """
    Current eigenvalue estimate ``N(M @ u_prev)``.
    """

    iterations: int = 0

    @classmethod
    def initial(cls, n: int, normalization: Normalization) -> "PerronState":
        e = np.ones(n)
        u = e / normalization.value(e)
        v = e / (e @ u)
        return cls(u=u, v=v, w=np.zeros(n), rho=float("nan"), iterations=0)

    def distance(self, other: "PerronState") -> float:
        """
        Infinity norm of the difference of the concatenated triples.
        """
        return float(
            max(
                np.max(np.abs(self.u - other.u)),
                np.max(np.abs(self.v - other.v)),
                np.max(np.abs(self.w - other.w)),
            )
        )


@dataclass(frozen=True)
class LowRankGradient:
    """
    A matrix stored as a short sum of scaled outer products,
    ``G[i, j] = sum_t c_t * left_t[i] * right_t[j]``.
    """

    terms: Tuple[Tuple[float, np.ndarray, np.ndarray], ...]

    @classmethod
    def outer(cls, left: np.ndarray, right: np.ndarray, scale: float = 1.0) -> "LowRankGradient":
        return cls(((float(scale), np.asarray(left), np.asarray(right)),))

    @classmethod
    def zero(cls, n: int) -> "LowRankGradient":
        return cls.outer(np.zeros(n), np.zeros(n), 0.0)

    @property
    def rank_bound(self) -> int:
        return len(self.terms)

    def entry(self, i: int, j: int) -> float:
        return float(sum(c * left[i] * right[j] for c, left, right in self.terms))

    def restrict(self, rows: Sequence[int], cols: Sequence[int]) -> np.ndarray:
        """
        Evaluate the entries ``(rows[k], cols[k])``, typically the facultative arcs.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        out = np.zeros(rows.shape)
        for c, left, right in self.terms:
            out += c * left[rows] * right[cols]
        return out

    def dense(self) -> np.ndarray:
        return sum(c * np.outer(left, right) for c, left, right in self.terms)

    def scaled(self, factor: float) -> "LowRankGradient":
        return LowRankGradient(tuple((c * factor, left, right) for c, left, right in self.terms))

    def __add__(self, other: "LowRankGradient") -> "LowRankGradient":
        return LowRankGradient(self.terms + other.terms)


def perron_operator(A: MatrixLike, xi: float = 0.0) -> LinearOperator:
    """
    The operator ``A + xi * e e^T``, which is positive for ``xi > 0`` and nonnegative ``A``.
    """
    A = aslinearoperator(A)
    n = A.shape[0]
    if xi == 0.0:
        return A

    def matvec(x):
        x = np.ravel(x)
        return A.matvec(x) + xi * x.sum() * np.ones(n)

    def rmatvec(x):
        x = np.ravel(x)
        return A.rmatvec(x) + xi * x.sum() * np.ones(n)

    return LinearOperator((n, n), matvec=matvec, rmatvec=rmatvec, dtype=float)


@dataclass(frozen=True)
class PowerResult:
    rho: float
    u: np.ndarray
    v: np.ndarray
    iterations: int
    residual: float


def power_iterate(
    M: MatrixLike,
    normalization: Normalization,
    tol: float = 1e-12,
    max_iter: Optional[int] = None,
    u0: Optional[np.ndarray] = None,
) -> PowerResult:
    """
    Compute the Perron root and the right and left Perron vectors of ``M`` by the power method.

    Parameters
    ----------
    M :
        A nonnegative square matrix. Convergence is guaranteed when it is irreducible and aperiodic.
    normalization :
        Fixes the scale of ``u``. On return ``N(u) == 1`` and ``v @ u == 1``.
    tol :
        Stop when ``|M u - rho u|_inf <= tol * rho`` and the same holds for ``v``.
    max_iter :
        Defaults to :func:`~ranking_opt.common.default_iteration_cap()`.
    u0 :
        Optional starting vector, e.g. from a previous solve.

    Raises
    ------
    ``NonConvergenceError``
        If ``max_iter`` is reached first. This usually means ``M`` is periodic.
    ``DegenerateStateError``
        If ``M @ u`` vanishes.
    """
    op = aslinearoperator(M)
    n = op.shape[0]
    if max_iter is None:
        max_iter = default_iteration_cap(n)
    u = np.ones(n) if u0 is None else np.asarray(u0, dtype=float).copy()
    u = u / normalization.value(u)
    v = np.ones(n) / u.sum()
    residual = float("inf")
    rho = float("nan")
    for iteration in range(1, max_iter + 1):
        Mu = op.matvec(u)
        rho = normalization.value(Mu)
        if not np.isfinite(rho) or rho <= _TINY:
            raise DegenerateStateError("M @ u vanishes, the matrix has no positive Perron root")
        vM = op.rmatvec(v)
        residual_u = float(np.max(np.abs(Mu - rho * u))) / rho
        residual_v = float(np.max(np.abs(vM - rho * v))) / (rho * float(np.max(np.abs(v))))
        residual = max(residual_u, residual_v)
        u = Mu / rho
        v = vM / float(np.max(np.abs(vM)))
        if residual <= tol:
            break
    else:
        raise NonConvergenceError("power iteration did not converge", residual, max_iter)
    uv = float(v @ u)
    if abs(uv) <= _TINY:
        raise DegenerateStateError("left and right Perron vectors are orthogonal")
    v = v / uv
    logger.debug("Power iteration converged: rho=%.12g after %d steps", rho, iteration)
    return PowerResult(rho=rho, u=u, v=v, iterations=iteration, residual=residual)


def root_gradient(u: np.ndarray, v: np.ndarray) -> LowRankGradient:
    """
    Derivative of the Perron root with respect to the matrix entries, ``v u^T``, for a pair with
    ``v @ u == 1``.
    """
    return LowRankGradient.outer(v, u)


def power_derivative_step(
    M: MatrixLike,
    objective: Objective,
    normalization: Normalization,
    state: PerronState,
    symmetric: bool = False,
) -> PerronState:
    """
    Advance ``(u, v, w)`` by one step of the coupled scheme.

    Uses the three products ``M @ u``, ``v @ M`` and ``w @ M``. When ``symmetric`` is set,
    ``v`` is taken as ``u / (u @ u)`` and only two products are needed.

    Raises
    ------
    ``DegenerateStateError``
        If ``N(M @ u)`` or ``v @ M @ u_next`` vanishes. Restarting from
        :meth:`PerronState.initial()` usually fixes the latter.
    """
    op = aslinearoperator(M)
    u, v, w = state.u, state.v, state.w
    Mu = op.matvec(u)
    rho = normalization.value(Mu)
    if not np.isfinite(rho) or rho <= _TINY:
        raise DegenerateStateError("M @ u vanishes, the matrix has no positive Perron root")
    u_next = Mu / rho
    if symmetric:
        v_next = u_next / (u_next @ u_next)
    else:
        vM = op.rmatvec(v)
        scale = float(vM @ u_next)
        if not np.isfinite(scale) or abs(scale) <= _TINY * max(1.0, float(np.max(np.abs(vM)))):
            raise DegenerateStateError("v @ M @ u vanishes, restart v from a positive vector")
        v_next = vM / scale
    grad_f = objective.grad(u)
    grad_n = normalization.grad(u)
    z = (grad_f - (grad_f @ u) * grad_n + op.rmatvec(w)) / rho
    w_next = z - (z @ u_next) * v_next
    return PerronState(u=u_next, v=v_next, w=w_next, rho=rho, iterations=state.iterations + 1)


def iterate_to_level(
    M: MatrixLike,
    objective: Objective,
    normalization: Normalization,
    state: PerronState,
    delta: float,
    cap: Optional[int] = None,
    symmetric: bool = False,
) -> Tuple[PerronState, int]:
    """
    Run :func:`power_derivative_step()` from ``state`` until two successive iterates are within
    ``delta`` of each other.

    Returns
    -------
    ``Tuple[PerronState, int]``
        The last state and the number of steps taken (at least 1).

    Raises
    ------
    ``NonConvergenceError``
        If ``cap`` steps are not enough.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    op = aslinearoperator(M)
    if cap is None:
        cap = default_iteration_cap(op.shape[0])
    distance = float("inf")
    for k in range(1, cap + 1):
        following = power_derivative_step(op, objective, normalization, state, symmetric)
        distance = following.distance(state)
        state = following
        if distance <= delta:
            return state, k
    raise NonConvergenceError(f"coupled iteration did not reach level {delta:.3e}", distance, cap)


ChainRule = Callable[[PerronState], LowRankGradient]


def identity_chain(state: PerronState) -> LowRankGradient:
    """
    Chain rule for problems where the iterated matrix is the weighted adjacency matrix itself.
    """
    return LowRankGradient.outer(state.w, state.u)


def assemble_J_g(
    state: PerronState, objective: Objective, chain: ChainRule = identity_chain
) -> Tuple[float, LowRankGradient]:
    """
    The approximations of the objective and of its gradient with respect to the adjacency
    matrix at the given state.
    """
    return objective.value(state.u), chain(state)


def empirical_rate(errors: Sequence[float], floor: float = 1e-11, ceiling: float = 1e-2) -> float:
    """
    Estimate the linear convergence rate of an error sequence by a least-squares fit of
    ``log(error)`` against the step index, over the errors between ``floor`` and ``ceiling``.
    """
    errors = np.asarray(errors, dtype=float)
    steps = np.arange(errors.size)
    window = (errors > floor) & (errors < ceiling)
    if window.sum() < 3:
        raise ValueError("not enough errors in the fitting window to estimate a rate")
    slope, _ = np.polyfit(steps[window], np.log(errors[window]), 1)
    return float(np.exp(slope))
