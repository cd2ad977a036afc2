from os import PathLike
from typing import Optional, Union

PathOrStr = Union[str, PathLike]

DENSE_ORACLE_CAP: int = 200
"""
Largest dimension accepted by the dense oracles (group inverse, bordered system, certified bound).
"""

DEFAULT_XI: float = 1e-4
"""
Default irreducibility shift for the HITS matrix ``AᵀA + ξeeᵀ``.
"""

DEFAULT_ALPHA: float = 0.9
"""
Default HOTS teleportation parameter, must lie in ``(1/2, 1)``.
"""


def default_iteration_cap(n: int) -> int:
    """
    Iteration cap used by the power-type solvers when none is given.
    """
    return 10 * n + 1000


def set_dense_oracle_cap(cap: int) -> None:
    """
    Set the global size cap of the dense oracles.
    """
    global DENSE_ORACLE_CAP
    if cap < 1:
        raise ConfigurationError(f"dense oracle cap must be positive, got {cap}")
    DENSE_ORACLE_CAP = cap


def get_dense_oracle_cap() -> int:
    """
    Get the global size cap of the dense oracles.
    """
    return DENSE_ORACLE_CAP


class RankingOptError(Exception):
    """
    Base class of every error raised by **ranking-opt**.
    """


class ConfigurationError(RankingOptError, ValueError):
    """
    A parameter is outside of its documented range, or a config file has unknown keys.
    """


class GraphFormatError(RankingOptError, ValueError):
    """
    An edge-list or weight document is malformed or violates the graph invariants.
    """

    def __init__(self, message: str, line_number: Optional[int] = None) -> None:
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class NonConvergenceError(RankingOptError):
    """
    An iterative solver reached its iteration cap before meeting its tolerance.

    This usually signals a periodic matrix or a tiny spectral gap.
    """

    def __init__(self, message: str, residual: float, iterations: int) -> None:
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class DegenerateStateError(RankingOptError, ArithmeticError):
    """
    The iteration hit a degenerate value: a zero matrix, a vanishing ``vᵀMu``, an empty arc set.
    """


class SpectralError(RankingOptError, ArithmeticError):
    """
    A dense oracle could not run: the eigenvalue is not simple, the bordered system is singular,
    or the problem exceeds :data:`DENSE_ORACLE_CAP`.
    """


class OutputLockedError(RankingOptError, TimeoutError):
    """
    Another job holds the lock on the output directory.
    """


def check_dense_size(n: int) -> None:
    if n > DENSE_ORACLE_CAP:
        raise SpectralError(
            f"dense oracle refused a problem of size {n} (cap is {DENSE_ORACLE_CAP})"
        )
