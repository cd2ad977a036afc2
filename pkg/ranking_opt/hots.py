"""
HOTS temperatures and their sensitivity to the link weights.

The HOTS vector ``p`` minimizes the convex dual function

    theta(p) = C(alpha) + (1 - alpha) lse(p) + (1 - alpha) lse(-p) + (2 alpha - 1) log S_A(p)

with ``S_A(p) = sum_ij A_ij exp(p_i - p_j)``. ``theta`` is invariant under ``p -> p + c e``, so
``p`` is only defined once a translation-equivariant normalization ``N(p) = 0`` is fixed.
The HOTS scores are ``exp(p)``.

All exponential sums are evaluated in log space with max-subtraction.
"""

import logging
from dataclasses import dataclass, field
from typing import FrozenSet, Optional, Tuple

import numpy as np
import scipy.sparse
from scipy.special import logsumexp, softmax

from .common import (
    DEFAULT_ALPHA,
    ConfigurationError,
    DegenerateStateError,
    NonConvergenceError,
    check_dense_size,
    default_iteration_cap,
)
from .functions import HOTS_NORMALIZATIONS, FunctionSpec, Normalization, get_normalization
from .graph import LinkGraph, SparseMatrix
from .hits import ThresholdReport, classify
from .spectral import LowRankGradient

logger = logging.getLogger(__name__)

DESCENT_SLACK = 1e-12
_MAX_HALVINGS = 60


@dataclass(frozen=True)
class HotsConfig:
    alpha: float = DEFAULT_ALPHA
    """
    Teleportation parameter, strictly inside ``(1/2, 1)``.
    """

    tol: float = 1e-10
    """
    Target for ``|grad theta(p)|_inf`` in :func:`hots_solve()`.
    """

    normalization: str = "lse-zero"
    target: FrozenSet[int] = frozenset()
    """
    Target set, needed by the ``lse-target-zero`` normalization.
    """

    max_iter: Optional[int] = None
    precondition: bool = False
    """
    Use the ``diag(d)`` preconditioned scheme in :func:`hots_aux_w()`, falling back to the plain
    scheme when it does not converge.
    """

    def __post_init__(self):
        if not 0.5 < self.alpha < 1.0:
            raise ConfigurationError(f"alpha must lie strictly inside (1/2, 1), got {self.alpha}")
        if self.tol <= 0:
            raise ConfigurationError(f"tol must be positive, got {self.tol}")
        if self.normalization not in HOTS_NORMALIZATIONS:
            raise ConfigurationError(
                f"unknown HOTS normalization {self.normalization!r}, "
                f"choose one of {list(HOTS_NORMALIZATIONS)}"
            )
        object.__setattr__(self, "target", frozenset(self.target))

    def normalizer(self, n: int) -> Normalization:
        return get_normalization(self.normalization, FunctionSpec(n=n, target=set(self.target)))

    def iteration_cap(self, n: int) -> int:
        return default_iteration_cap(n) if self.max_iter is None else self.max_iter


def _arcs(A: SparseMatrix) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    A = scipy.sparse.csr_matrix(A)
    rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
    return rows, A.indices, A.data


def _constant(alpha: float) -> float:
    return 1.0 - 2.0 * (1.0 - alpha) * np.log(1.0 - alpha) - (2.0 * alpha - 1.0) * np.log(
        2.0 * alpha - 1.0
    )


@dataclass(frozen=True)
class _Aggregates:
    log_s_plus: float
    log_s_minus: float
    log_s_arcs: float
    arc_weights: np.ndarray
    """
    ``Q_ij = A_ij exp(p_i - p_j) / S_A`` on the stored arcs.
    """
    rows: np.ndarray
    cols: np.ndarray


def _aggregates(p: np.ndarray, A: SparseMatrix) -> _Aggregates:
    rows, cols, data = _arcs(A)
    z = p[rows] - p[cols]
    positive = data > 0
    if not positive.any():
        raise DegenerateStateError("the graph has no arc with positive weight")
    log_s_arcs = float(logsumexp(z[positive], b=data[positive]))
    q = np.zeros_like(z)
    q[positive] = data[positive] * np.exp(z[positive] - log_s_arcs)
    return _Aggregates(
        log_s_plus=float(logsumexp(p)),
        log_s_minus=float(logsumexp(-p)),
        log_s_arcs=log_s_arcs,
        arc_weights=q,
        rows=rows,
        cols=cols,
    )


def _log_weighted_sums(values: np.ndarray, weights: np.ndarray, index: np.ndarray, n: int):
    """
    ``log(sum_k weights[k] exp(values[k]))`` grouped by ``index``, ``-inf`` for empty groups.
    """
    shift = float(values.max()) if values.size else 0.0
    sums = np.bincount(index, weights=weights * np.exp(values - shift), minlength=n)
    with np.errstate(divide="ignore"):
        return np.log(sums) + shift


def _scatter(q: np.ndarray, rows: np.ndarray, cols: np.ndarray, n: int) -> np.ndarray:
    """
    ``Z^T q``: row sums minus column sums of an arc vector.
    """
    return np.bincount(rows, weights=q, minlength=n) - np.bincount(cols, weights=q, minlength=n)


def theta(p: np.ndarray, A: SparseMatrix, cfg: HotsConfig) -> float:
    """
    The dual function. Raises :class:`~ranking_opt.common.DegenerateStateError` when the graph has
    no arc.
    """
    p = np.asarray(p, dtype=float)
    agg = _aggregates(p, A)
    alpha = cfg.alpha
    return float(
        _constant(alpha)
        + (1.0 - alpha) * (agg.log_s_plus + agg.log_s_minus)
        + (2.0 * alpha - 1.0) * agg.log_s_arcs
    )


def theta_grad(p: np.ndarray, A: SparseMatrix, cfg: HotsConfig) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    agg = _aggregates(p, A)
    alpha = cfg.alpha
    return (1.0 - alpha) * (softmax(p) - softmax(-p)) + (2.0 * alpha - 1.0) * _scatter(
        agg.arc_weights, agg.rows, agg.cols, p.size
    )


def _log_x_y(p: np.ndarray, A: SparseMatrix, cfg: HotsConfig) -> Tuple[np.ndarray, np.ndarray]:
    # theta_grad = Y - X with X, Y > 0. X = 1 / d and the fixed-point map is p + log(X / Y) / 2.
    agg = _aggregates(p, A)
    rows, cols, data = _arcs(A)
    n = p.size
    alpha = cfg.alpha
    log_kappa = np.log(1.0 - alpha) - np.log(2.0 * alpha - 1.0)
    log_in = _log_weighted_sums(p[rows], data, cols, n)  # a_l = sum_i A_il exp(p_i)
    log_out = _log_weighted_sums(-p[cols], data, rows, n)  # b_l = sum_j A_lj exp(-p_j)
    base = np.log(2.0 * alpha - 1.0) - agg.log_s_arcs
    with np.errstate(divide="ignore"):
        log_x = (
            -p
            + base
            + np.logaddexp(log_in + agg.log_s_minus, log_kappa + agg.log_s_arcs)
            - agg.log_s_minus
        )
        log_y = (
            p
            + base
            + np.logaddexp(log_out + agg.log_s_plus, log_kappa + agg.log_s_arcs)
            - agg.log_s_plus
        )
    return log_x, log_y


def d_vector(p: np.ndarray, A: SparseMatrix, cfg: HotsConfig) -> np.ndarray:
    """
    The positive vector ``d`` with
    ``d_l = exp(p_l) S^- S_A / ((2 alpha - 1) a_l S^- + (1 - alpha) S_A)``, where
    ``S^- = sum_j exp(-p_j)`` and ``a_l = sum_i A_il exp(p_i)``.
    """
    log_x, _ = _log_x_y(np.asarray(p, dtype=float), A, cfg)
    return np.exp(-log_x)


def u_map_log_form(p: np.ndarray, A: SparseMatrix, cfg: HotsConfig) -> np.ndarray:
    """
    The fixed-point map ``u(p)``, computed from its explicit logarithmic expression.
    """
    p = np.asarray(p, dtype=float)
    log_x, log_y = _log_x_y(p, A, cfg)
    return p + 0.5 * (log_x - log_y)


def u_map_d_form(p: np.ndarray, A: SparseMatrix, cfg: HotsConfig) -> np.ndarray:
    """
    The fixed-point map written as ``u(p) = p - log(1 + d * grad theta(p)) / 2``.
    """
    p = np.asarray(p, dtype=float)
    return p - 0.5 * np.log1p(d_vector(p, A, cfg) * theta_grad(p, A, cfg))


def _damped_step(
    p: np.ndarray, A: SparseMatrix, cfg: HotsConfig, normalization: Normalization
) -> Tuple[np.ndarray, int]:
    u = u_map_log_form(p, A, cfg)
    current = theta(p, A, cfg)
    direction = u - p
    step = 1.0
    for halvings in range(_MAX_HALVINGS):
        candidate = p + step * direction
        if theta(candidate, A, cfg) <= current + DESCENT_SLACK:
            return candidate - normalization.value(candidate), halvings
        step *= 0.5
    residual = float(np.max(np.abs(theta_grad(p, A, cfg))))
    logger.warning("No descent along the fixed-point step after %d halvings", _MAX_HALVINGS)
    raise NonConvergenceError("HOTS damped step found no descent", residual, _MAX_HALVINGS)


def hots_fixed_point_step(p: np.ndarray, A: SparseMatrix, cfg: HotsConfig) -> np.ndarray:
    """
    One application of the fixed-point map followed by re-normalization to ``N(p) = 0``.

    If the plain step would increase ``theta`` by more than ``1e-12``, the step along
    ``u(p) - p`` is halved until it does not.

    Raises
    ------
    ``NonConvergenceError``
        If no step length along ``u(p) - p`` decreases ``theta``.
    """
    p = np.asarray(p, dtype=float)
    following, _ = _damped_step(p, A, cfg, cfg.normalizer(p.size))
    return following


@dataclass(frozen=True)
class HotsState:
    p: np.ndarray
    alpha: float
    residual: float
    """
    ``|grad theta(p)|_inf``.
    """
    iterations: int = 0
    damped_steps: int = 0
    log_s_plus: float = 0.0
    log_s_minus: float = 0.0
    log_s_arcs: float = 0.0
    w: Optional[np.ndarray] = field(default=None, compare=False)
    """
    Last auxiliary vector, kept as a hot start for the next derivative computation.
    """

    @property
    def s_plus(self) -> float:
        return float(np.exp(self.log_s_plus))

    @property
    def s_minus(self) -> float:
        return float(np.exp(self.log_s_minus))

    @property
    def s_arcs(self) -> float:
        return float(np.exp(self.log_s_arcs))

    @property
    def scores(self) -> np.ndarray:
        return scores(self.p)


def scores(p: np.ndarray) -> np.ndarray:
    """
    The HOTS values ``exp(p)``.
    """
    return np.exp(p)


def hots_solve(p0: Optional[np.ndarray], A: SparseMatrix, cfg: HotsConfig) -> HotsState:
    """
    Compute the HOTS vector by iterating the fixed-point map until
    ``|grad theta(p)|_inf <= cfg.tol``.

    Parameters
    ----------
    p0 :
        Starting point, e.g. the vector of a previous solve. ``None`` starts from ``0``.
    A :
        Weighted adjacency matrix with at least one positive arc.
    cfg :
        Parameters of the problem.

    Returns
    -------
    :class:`HotsState`

    Raises
    ------
    ``NonConvergenceError``
        If ``cfg.max_iter`` steps are not enough.
    """
    n = A.shape[0]
    normalization = cfg.normalizer(n)
    p = np.zeros(n) if p0 is None else np.asarray(p0, dtype=float).copy()
    p = p - normalization.value(p)
    cap = cfg.iteration_cap(n)
    damped = 0
    residual = float("inf")
    for iteration in range(cap + 1):
        residual = float(np.max(np.abs(theta_grad(p, A, cfg))))
        if residual <= cfg.tol:
            agg = _aggregates(p, A)
            if damped:
                logger.warning("HOTS fixed point needed %d damped steps", damped)
            logger.debug("HOTS solve converged after %d steps, residual %.3e", iteration, residual)
            return HotsState(
                p=p,
                alpha=cfg.alpha,
                residual=residual,
                iterations=iteration,
                damped_steps=damped,
                log_s_plus=agg.log_s_plus,
                log_s_minus=agg.log_s_minus,
                log_s_arcs=agg.log_s_arcs,
            )
        if iteration == cap:
            break
        p, halvings = _damped_step(p, A, cfg, normalization)
        damped += halvings > 0
    raise NonConvergenceError("HOTS fixed point did not converge", residual, cap)


def hessian_matvec(p: np.ndarray, A: SparseMatrix, cfg: HotsConfig, y: np.ndarray) -> np.ndarray:
    """
    The product ``(grad^2 theta)(p) @ y`` in ``O(nnz(A))`` without forming the Hessian.
    """
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    agg = _aggregates(p, A)
    alpha = cfg.alpha
    pi_plus = softmax(p)
    pi_minus = softmax(-p)
    out = (1.0 - alpha) * (
        pi_plus * y - pi_plus * (pi_plus @ y) + pi_minus * y - pi_minus * (pi_minus @ y)
    )
    q = agg.arc_weights
    zy = y[agg.rows] - y[agg.cols]
    out += (2.0 * alpha - 1.0) * _scatter(q * zy - q * (q @ zy), agg.rows, agg.cols, p.size)
    return out


def hessian_dense(p: np.ndarray, A: SparseMatrix, cfg: HotsConfig) -> np.ndarray:
    n = np.size(p)
    check_dense_size(n)
    identity = np.eye(n)
    return np.column_stack([hessian_matvec(p, A, cfg, identity[:, k]) for k in range(n)])


def _plain_aux(
    p: np.ndarray,
    A: SparseMatrix,
    cfg: HotsConfig,
    rhs: np.ndarray,
    tol: float,
    cap: int,
    w0: Optional[np.ndarray],
) -> Tuple[Optional[np.ndarray], int, float]:
    w = np.zeros_like(rhs) if w0 is None else w0 - w0.mean()
    residual = float("inf")
    for k in range(1, cap + 1):
        r = rhs - hessian_matvec(p, A, cfg, w)
        residual = float(np.max(np.abs(r)))
        if not np.isfinite(residual):
            return None, k, residual
        if residual <= tol:
            return w, k, residual
        w = w + 0.5 * r
        w -= w.mean()
    return None, cap, residual


def _preconditioned_aux(
    p: np.ndarray,
    A: SparseMatrix,
    cfg: HotsConfig,
    rhs: np.ndarray,
    tol: float,
    cap: int,
    w0: Optional[np.ndarray],
) -> Tuple[Optional[np.ndarray], int, float]:
    # w = d * w' with w' <- (rhs / 2 + w' - H(d * w') / 2)(I - e y^T / (y @ e)), y = 1 / d.
    d = d_vector(p, A, cfg)
    y = 1.0 / d
    w_scaled = np.zeros_like(rhs) if w0 is None else w0 / d
    w_scaled -= (w_scaled.sum() / y.sum()) * y
    residual = float("inf")
    first: Optional[float] = None
    for k in range(1, cap + 1):
        w = d * w_scaled
        r = rhs - hessian_matvec(p, A, cfg, w)
        residual = float(np.max(np.abs(r)))
        if first is None:
            first = residual
        if not np.isfinite(residual) or residual > 1e6 * max(first, tol):
            return None, k, residual
        if residual <= tol:
            return w - w.mean(), k, residual
        w_scaled = w_scaled + 0.5 * r
        w_scaled -= (w_scaled.sum() / y.sum()) * y
    return None, cap, residual


def hots_aux_w(
    p: np.ndarray,
    A: SparseMatrix,
    cfg: HotsConfig,
    grad_f: np.ndarray,
    grad_n: np.ndarray,
    tol: float,
    w0: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, str, int]:
    """
    The auxiliary vector ``w = (-grad f + (grad f . e) grad N)(grad^2 theta)^#``.

    It is the fixed point of ``w <- (w (I - H/2) + r/2)(I - e e^T / n)`` with ``H`` the Hessian,
    which converges because the nonzero eigenvalues of ``H`` lie in ``(0, 4)``. With
    ``cfg.precondition`` the iteration matrix is ``I - diag(d) H / 2`` instead, and the plain
    scheme takes over if it fails.

    Returns
    -------
    ``Tuple[np.ndarray, str, int]``
        ``w`` with ``w @ e == 0``, the mode used (``"plain"``, ``"preconditioned"`` or
        ``"preconditioned-fallback"``) and the number of Hessian products.

    Raises
    ------
    ``NonConvergenceError``
        If no mode reaches ``|w H - r|_inf <= tol`` within the iteration cap.
    """
    p = np.asarray(p, dtype=float)
    grad_f = np.asarray(grad_f, dtype=float)
    rhs = -grad_f + grad_f.sum() * np.asarray(grad_n, dtype=float)
    cap = cfg.iteration_cap(p.size)
    products = 0
    mode = "plain"
    if cfg.precondition:
        w, k, residual = _preconditioned_aux(p, A, cfg, rhs, tol, cap, w0)
        products += k
        if w is not None:
            return w, "preconditioned", products
        logger.warning(
            "Preconditioned derivative scheme failed (residual %.3e), falling back", residual
        )
        mode = "preconditioned-fallback"
        w0 = None
    w, k, residual = _plain_aux(p, A, cfg, rhs, tol, cap, w0)
    products += k
    if w is None:
        raise NonConvergenceError(
            "HOTS derivative scheme did not converge, the Hessian kernel is probably larger "
            "than the constants (graph not strongly connected?)",
            residual,
            products,
        )
    return w, mode, products


def hots_shift(p: np.ndarray, w: np.ndarray, A: SparseMatrix) -> float:
    """
    ``B = (sum_kl A_kl exp(p_k - p_l) w_l - sum_kl w_k A_kl exp(p_k - p_l)) / S_A``.
    """
    agg = _aggregates(np.asarray(p, dtype=float), A)
    q = agg.arc_weights
    return float(q @ w[agg.cols] - q @ w[agg.rows])


def hots_gradient(
    p: np.ndarray, w: np.ndarray, A: SparseMatrix, cfg: HotsConfig
) -> LowRankGradient:
    """
    Derivative of ``f(p(A))`` with respect to every entry of ``A``:
    ``g_ij = (2 alpha - 1) / S_A exp(p_i - p_j) (w_i - w_j + B)``, stored as three outer products.
    """
    p = np.asarray(p, dtype=float)
    w = np.asarray(w, dtype=float)
    agg = _aggregates(p, A)
    shift_left = float(p.max())
    shift_right = float((-p).max())
    left = np.exp(p - shift_left)
    right = np.exp(-p - shift_right)
    scale = (2.0 * cfg.alpha - 1.0) * np.exp(shift_left + shift_right - agg.log_s_arcs)
    B = hots_shift(p, w, A)
    return LowRankGradient(
        (
            (scale, left * w, right),
            (-scale, left, right * w),
            (scale * B, left, right),
        )
    )


def hots_gradient_contraction(
    p: np.ndarray, w: np.ndarray, A: SparseMatrix, cfg: HotsConfig
) -> np.ndarray:
    """
    The dense gradient ``sum_l w_l c^l`` with
    ``c^l_ij = (2 alpha - 1) / S_A exp(p_i - p_j) (delta_li - delta_lj + B_l)``, the mixed second
    derivatives of ``theta``. Small problems only.
    """
    p = np.asarray(p, dtype=float)
    n = p.size
    check_dense_size(n)
    agg = _aggregates(p, A)
    ratio = np.exp(p[:, None] - p[None, :] - agg.log_s_arcs) * (2.0 * cfg.alpha - 1.0)
    B_l = -_scatter(agg.arc_weights, agg.rows, agg.cols, n)
    out = np.zeros((n, n))
    for k in range(n):
        delta = np.zeros(n)
        delta[k] = 1.0
        out += w[k] * ratio * (delta[:, None] - delta[None, :] + B_l[k])
    return out


def hots_threshold_report(
    g: LinkGraph,
    A: SparseMatrix,
    p: np.ndarray,
    w: np.ndarray,
    cfg: HotsConfig,
    tol: float = 1e-8,
) -> ThresholdReport:
    """
    Classify the facultative arcs at a stationary point: ``(i, j)`` should be activated when
    ``w_j < w_i + B`` and removed when ``w_j > w_i + B``, where the gradient is larger than
    ``tol`` in absolute value. ``w`` itself orders the target pages by preference, lower first.
    """
    gradient = hots_gradient(p, w, A, cfg).restrict(g.facultative_rows, g.facultative_cols)
    B = hots_shift(p, w, A)
    return ThresholdReport(
        cutoffs={i: float(w[i] + B) for i in sorted(g.controlled_pages())},
        scores=np.asarray(w, dtype=float).copy(),
        gradient=gradient,
        classes=classify(gradient, tol),
        order=tuple(int(j) for j in np.argsort(w, kind="stable")),
        shift=B,
    )


@dataclass(frozen=True)
class PrimalFlow:
    """
    Entropy-maximizing flow rebuilt from a dual vector. The virtual node has index ``n``.
    """

    mu: float
    a_last: float
    b_last: float
    arc_flow: np.ndarray
    """
    Flow on the stored arcs of ``A``, in CSR order.
    """
    to_virtual: np.ndarray
    from_virtual: np.ndarray
    conservation: np.ndarray
    """
    Inflow minus outflow at each of the ``n + 1`` nodes.
    """
    mass_residual: float
    alpha_residuals: Tuple[float, float]

    @property
    def max_residual(self) -> float:
        return float(
            max(
                np.max(np.abs(self.conservation)),
                abs(self.mass_residual),
                *map(abs, self.alpha_residuals),
            )
        )


def primal_flow(p: np.ndarray, A: SparseMatrix, cfg: HotsConfig) -> PrimalFlow:
    """
    Rebuild the primal flow from ``p`` with the closed-form multipliers
    ``exp(mu) = (2 alpha - 1) / S_A``, ``exp(a) = (1 - alpha) exp(-mu) / S^-`` and
    ``exp(-b) = (1 - alpha) exp(-mu) / S^+``, and report how far it is from feasible.
    Residuals vanish exactly at the HOTS fixed point.
    """
    p = np.asarray(p, dtype=float)
    n = p.size
    alpha = cfg.alpha
    agg = _aggregates(p, A)
    mu = np.log(2.0 * alpha - 1.0) - agg.log_s_arcs
    a_last = np.log(1.0 - alpha) - mu - agg.log_s_minus
    b_last = -np.log(1.0 - alpha) + mu + agg.log_s_plus
    arc_flow = (2.0 * alpha - 1.0) * agg.arc_weights
    to_virtual = np.exp(-b_last + p + mu)
    from_virtual = np.exp(a_last - p + mu)
    conservation = np.empty(n + 1)
    conservation[:n] = (
        np.bincount(agg.cols, weights=arc_flow, minlength=n)
        + from_virtual
        - np.bincount(agg.rows, weights=arc_flow, minlength=n)
        - to_virtual
    )
    conservation[n] = to_virtual.sum() - from_virtual.sum()
    mass = arc_flow.sum() + to_virtual.sum() + from_virtual.sum()
    return PrimalFlow(
        mu=float(mu),
        a_last=float(a_last),
        b_last=float(b_last),
        arc_flow=arc_flow,
        to_virtual=to_virtual,
        from_virtual=from_virtual,
        conservation=conservation,
        mass_residual=float(mass - 1.0),
        alpha_residuals=(
            float(from_virtual.sum() - (1.0 - alpha)),
            float(to_virtual.sum() - (1.0 - alpha)),
        ),
    )
