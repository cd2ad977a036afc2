"""
Dense reference computations for small problems.

These are O(n^3) and refuse problems larger than
:func:`~ranking_opt.common.get_dense_oracle_cap()`. They serve as oracles for the iterative
schemes in :mod:`ranking_opt.spectral` and as the direct-resolution strategy of the benchmark.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from .common import SpectralError, check_dense_size

logger = logging.getLogger(__name__)

_CONDITION_LIMIT = 1e14


def _as_dense(M) -> np.ndarray:
    if hasattr(M, "toarray"):
        return M.toarray()
    return np.asarray(M, dtype=float)


def eigenprojector(M, lam: float, gap: float = 1e-8) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    The right and left eigenvectors of the simple eigenvalue of ``M`` closest to ``lam``,
    scaled so that ``v @ u == 1``, together with the eigenprojector ``u v^T``.

    Raises
    ------
    ``SpectralError``
        If another eigenvalue lies within ``gap * max(1, |lam|)`` of the selected one.
    """
    M = _as_dense(M)
    check_dense_size(M.shape[0])
    values, left, right = scipy.linalg.eig(M, left=True, right=True)
    k = int(np.argmin(np.abs(values - lam)))
    others = np.delete(values, k)
    if others.size and np.min(np.abs(others - values[k])) <= gap * max(1.0, abs(lam)):
        raise SpectralError(f"eigenvalue {lam:.6g} is not simple")
    u = np.real(right[:, k])
    v = np.real(left[:, k])
    scale = v @ u
    if abs(scale) <= 1e-14:
        raise SpectralError(f"eigenvalue {lam:.6g} is defective")
    v = v / scale
    return u, v, np.outer(u, v)


def drazin_dense(M, lam: float) -> np.ndarray:
    """
    The group inverse ``S = (M - lam I)^#`` of ``M - lam I`` for a simple eigenvalue ``lam``,
    computed as ``(M - lam I + P)^{-1} - P`` with ``P`` the eigenprojector.

    ``S`` satisfies ``S (M - lam I) = (M - lam I) S = I - P`` and ``S P = P S = 0``.
    """
    M = _as_dense(M)
    n = M.shape[0]
    _, _, P = eigenprojector(M, lam)
    shifted = M - lam * np.eye(n) + P
    if np.linalg.cond(shifted) > _CONDITION_LIMIT:
        raise SpectralError("shifted matrix is singular, the eigenvalue is not simple")
    return scipy.linalg.inv(shifted) - P


def solve_bordered(
    M, lam: float, u: np.ndarray, grad_n: np.ndarray, grad_f: np.ndarray
) -> np.ndarray:
    """
    Solve ``[w, w_last] @ [[M - lam I, -u], [grad_n^T, 0]] = [-grad_f, 0]`` for ``w``.

    The solution is ``w = (-grad_f + (grad_f @ u) grad_n) (M - lam I)^#`` with ``w @ u == 0``,
    provided ``lam`` is simple and ``grad_n @ u == 1``.

    Raises
    ------
    ``SpectralError``
        If the bordered matrix is singular.
    """
    M = _as_dense(M)
    n = M.shape[0]
    check_dense_size(n)
    B = np.zeros((n + 1, n + 1))
    B[:n, :n] = M - lam * np.eye(n)
    B[:n, n] = -u
    B[n, :n] = grad_n
    rhs = np.append(-np.asarray(grad_f, dtype=float), 0.0)
    if np.linalg.cond(B) > _CONDITION_LIMIT:
        raise SpectralError(
            "bordered system is singular: eigenvalue not simple or bad normalization"
        )
    try:
        solution = scipy.linalg.solve(B.T, rhs)
    except scipy.linalg.LinAlgError as err:
        raise SpectralError(f"bordered system is singular: {err}") from err
    return solution[:n]


@dataclass(frozen=True)
class CertifiedBound:
    """
    Quantities of the a posteriori eigenpair bound. When :attr:`available` is true, the exact
    eigenpair ``(x*, lam*)`` with ``p @ x* == 1`` satisfies ``|x* - x|_inf <= beta`` and
    ``|lam* - lam| <= beta``.
    """

    eta: float
    sigma: float
    tau: float
    delta: float
    beta: Optional[float]

    @property
    def available(self) -> bool:
        return self.beta is not None

    def to_dict(self) -> dict:
        return {
            "available": self.available,
            "beta": self.beta,
            "delta": self.delta,
            "eta": self.eta,
            "sigma": self.sigma,
            "tau": self.tau,
        }


def certified_eigen_bound(M, x: np.ndarray, lam: float, p: np.ndarray) -> CertifiedBound:
    """
    Certify an approximate eigenpair ``(x, lam)`` normalized by ``p @ x == 1``.

    With ``B = [[M - lam I, -x], [p^T, 0]]`` and ``C`` its computed inverse, let
    ``eta = |C [M x - lam x; 0]|_inf``, ``sigma = |I - C B|_inf``, ``tau = |C|_inf`` and
    ``delta = (1 - sigma)^2 - 4 eta tau``. If ``sigma < 1`` and ``delta >= 0`` then
    ``beta = 2 eta / (1 - sigma + sqrt(delta))`` bounds the error. Otherwise the bound is
    unavailable, which is reported with ``beta=None`` rather than raised.
    """
    M = _as_dense(M)
    n = M.shape[0]
    check_dense_size(n)
    x = np.asarray(x, dtype=float)
    B = np.zeros((n + 1, n + 1))
    B[:n, :n] = M - lam * np.eye(n)
    B[:n, n] = -x
    B[n, :n] = p
    try:
        C = scipy.linalg.inv(B)
    except scipy.linalg.LinAlgError:
        logger.info("Certified bound unavailable: bordered matrix is singular")
        return CertifiedBound(float("inf"), float("inf"), float("inf"), float("-inf"), None)
    residual = np.append(M @ x - lam * x, 0.0)
    eta = float(np.max(np.abs(C @ residual)))
    sigma = float(np.linalg.norm(np.eye(n + 1) - C @ B, ord=np.inf))
    tau = float(np.linalg.norm(C, ord=np.inf))
    delta = (1.0 - sigma) ** 2 - 4.0 * eta * tau
    beta: Optional[float] = None
    if sigma < 1.0 and delta >= 0.0:
        beta = 2.0 * eta / (1.0 - sigma + np.sqrt(delta))
    else:
        logger.info("Certified bound unavailable: sigma=%.3e delta=%.3e", sigma, delta)
    return CertifiedBound(eta=eta, sigma=sigma, tau=tau, delta=delta, beta=beta)


def spectral_radius(M) -> float:
    M = _as_dense(M)
    check_dense_size(M.shape[0])
    return float(np.max(np.abs(scipy.linalg.eigvals(M))))


def log_convexity_check(A, B, t: float) -> bool:
    """
    Check that the Perron root is a log-convex function of the log of the entries:
    ``rho(A^t o B^(1-t)) <= rho(A)^t rho(B)^(1-t)`` up to a relative slack of ``1e-12``.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    A = _as_dense(A)
    B = _as_dense(B)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} and {B.shape}")
    pattern = (A > 0) & (B > 0)
    C = np.zeros_like(A)
    C[pattern] = A[pattern] ** t * B[pattern] ** (1.0 - t)
    rho_c = spectral_radius(C)
    return rho_c <= spectral_radius(A) ** t * spectral_radius(B) ** (1.0 - t) + 1e-12 * rho_c
