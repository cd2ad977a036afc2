"""
Normalizations and objectives of ranking vectors.

A normalization ``N`` fixes the scale (Perron problems) or the additive constant (HOTS problems)
of a ranking vector. An objective ``f`` maps a ranking vector to the value being optimized. Both
expose a value and a gradient. They are looked up by name with :func:`get_normalization()` and
:func:`get_objective()`.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, ClassVar, Dict, Iterable, Optional, Set

import numpy as np
from scipy.special import logsumexp, softmax

from .common import ConfigurationError

logger = logging.getLogger(__name__)


def _indicator(n: int, nodes: Iterable[int]) -> np.ndarray:
    r = np.zeros(n)
    r[sorted(set(nodes))] = 1.0
    return r


class Normalization(ABC):
    """
    A normalization function with its gradient.

    Subclasses for Perron problems are positively homogeneous of degree 1,
    ``N(a * u) = a * N(u)``, so that ``grad(u) @ u == value(u)``.
    Subclasses for HOTS problems are translation equivariant, ``N(p + a) = N(p) + a``,
    so that ``grad(p).sum() == 1``.
    """

    name: ClassVar[str] = ""

    @abstractmethod
    def value(self, u: np.ndarray) -> float:
        raise NotImplementedError

    @abstractmethod
    def grad(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Objective(ABC):
    """
    A differentiable objective of a ranking vector.
    """

    name: ClassVar[str] = ""

    @abstractmethod
    def value(self, u: np.ndarray) -> float:
        raise NotImplementedError

    @abstractmethod
    def grad(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError


# Perron normalizations.


class L1Normalization(Normalization):
    name = "l1"

    def value(self, u: np.ndarray) -> float:
        return float(np.abs(u).sum())

    def grad(self, u: np.ndarray) -> np.ndarray:
        return np.sign(u) + (u == 0)


class L2Normalization(Normalization):
    name = "l2"

    def value(self, u: np.ndarray) -> float:
        return float(np.linalg.norm(u))

    def grad(self, u: np.ndarray) -> np.ndarray:
        return u / np.linalg.norm(u)


@dataclass
class CoordinateNormalization(Normalization):
    index: int
    name = "coordinate"

    def value(self, u: np.ndarray) -> float:
        return float(u[self.index])

    def grad(self, u: np.ndarray) -> np.ndarray:
        g = np.zeros_like(u)
        g[self.index] = 1.0
        return g


@dataclass
class WeightedL2Normalization(Normalization):
    """
    ``N(u) = (sum_i r_i u_i^2) ** 0.5``.
    """

    weights: np.ndarray
    name = "weighted-l2"

    def value(self, u: np.ndarray) -> float:
        return float(np.sqrt(self.weights @ (u * u)))

    def grad(self, u: np.ndarray) -> np.ndarray:
        return self.weights * u / self.value(u)


# HOTS normalizations.


class MeanZeroNormalization(Normalization):
    name = "mean-zero"

    def value(self, p: np.ndarray) -> float:
        return float(p.mean())

    def grad(self, p: np.ndarray) -> np.ndarray:
        return np.full_like(p, 1.0 / p.size)


@dataclass
class LseNormalization(Normalization):
    """
    ``N(p) = log(sum_{i in S} exp(p_i))`` where ``S`` is the whole node set when ``mask`` is
    ``None``.
    """

    mask: Optional[np.ndarray] = None
    name = "lse-zero"

    def value(self, p: np.ndarray) -> float:
        return float(logsumexp(p if self.mask is None else p[self.mask]))

    def grad(self, p: np.ndarray) -> np.ndarray:
        if self.mask is None:
            return softmax(p)
        g = np.zeros_like(p)
        g[self.mask] = softmax(p[self.mask])
        return g


# Objectives.


@dataclass
class SumOfSquares(Objective):
    """
    ``f(u) = sum_i r_i u_i^2``, by default with ``r`` the indicator of the target set.
    """

    weights: np.ndarray
    name = "sum-of-squares"

    def value(self, u: np.ndarray) -> float:
        return float(self.weights @ (u * u))

    def grad(self, u: np.ndarray) -> np.ndarray:
        return 2.0 * self.weights * u


@dataclass
class Linear(Objective):
    weights: np.ndarray
    name = "linear"

    def value(self, u: np.ndarray) -> float:
        return float(self.weights @ u)

    def grad(self, u: np.ndarray) -> np.ndarray:
        return self.weights.copy()


@dataclass
class Coordinate(Objective):
    index: int
    name = "coordinate"

    def value(self, u: np.ndarray) -> float:
        return float(u[self.index])

    def grad(self, u: np.ndarray) -> np.ndarray:
        g = np.zeros_like(u)
        g[self.index] = 1.0
        return g


@dataclass
class NormalizationObjective(Objective):
    """
    ``f = N``. Constant on the normalization manifold, so its gradient with respect to the
    matrix entries vanishes.
    """

    normalization: Normalization
    name = "normalization"

    def value(self, u: np.ndarray) -> float:
        return self.normalization.value(u)

    def grad(self, u: np.ndarray) -> np.ndarray:
        return self.normalization.grad(u)


@dataclass
class ExpSum(Objective):
    """
    ``f(p) = sum_i r_i exp(p_i)``, the total HOTS score of the target set.
    """

    weights: np.ndarray
    name = "exp-sum"

    def value(self, p: np.ndarray) -> float:
        return float(self.weights @ np.exp(p))

    def grad(self, p: np.ndarray) -> np.ndarray:
        return self.weights * np.exp(p)


@dataclass
class FunctionSpec:
    """
    Everything a registry factory may need to build a normalization or an objective.
    """

    n: int
    target: Set[int] = field(default_factory=set)
    index: Optional[int] = None
    weights: Optional[np.ndarray] = None

    def target_indicator(self) -> np.ndarray:
        if not self.target:
            raise ConfigurationError("this function needs a nonempty target set")
        return _indicator(self.n, self.target)

    def weight_vector(self) -> np.ndarray:
        if self.weights is not None:
            weights = np.asarray(self.weights, dtype=float)
            if weights.shape != (self.n,):
                raise ConfigurationError(
                    f"weight vector has shape {weights.shape}, expected ({self.n},)"
                )
            return weights
        return self.target_indicator()

    def coordinate(self) -> int:
        if self.index is None:
            if len(self.target) != 1:
                raise ConfigurationError("coordinate functions need an index")
            return next(iter(self.target))
        if not 0 <= self.index < self.n:
            raise ConfigurationError(f"coordinate {self.index} out of range for n={self.n}")
        return self.index


_NORMALIZATIONS: Dict[str, Callable[[FunctionSpec], Normalization]] = {
    "l1": lambda spec: L1Normalization(),
    "l2": lambda spec: L2Normalization(),
    "coordinate": lambda spec: CoordinateNormalization(spec.coordinate()),
    "weighted-l2": lambda spec: WeightedL2Normalization(spec.weight_vector()),
    "mean-zero": lambda spec: MeanZeroNormalization(),
    "lse-zero": lambda spec: LseNormalization(),
    "lse-target-zero": lambda spec: LseNormalization(spec.target_indicator() > 0),
}

PERRON_NORMALIZATIONS = ("l1", "l2", "coordinate", "weighted-l2")
HOTS_NORMALIZATIONS = ("mean-zero", "lse-zero", "lse-target-zero")


def _normalization_objective(spec: FunctionSpec, normalization: Optional[Normalization]):
    if normalization is None:
        raise ConfigurationError("the 'normalization' objective needs the normalization in use")
    return NormalizationObjective(normalization)


_OBJECTIVES: Dict[str, Callable[[FunctionSpec, Optional[Normalization]], Objective]] = {
    "sum-of-squares": lambda spec, _: SumOfSquares(spec.weight_vector()),
    "linear": lambda spec, _: Linear(spec.weight_vector()),
    "coordinate": lambda spec, _: Coordinate(spec.coordinate()),
    "normalization": _normalization_objective,
    "exp-sum": lambda spec, _: ExpSum(spec.weight_vector()),
}


def add_normalization(name: str, factory: Callable[[FunctionSpec], Normalization]) -> None:
    """
    Register a new normalization factory under ``name``.
    """
    _NORMALIZATIONS[name] = factory


def add_objective(
    name: str, factory: Callable[[FunctionSpec, Optional[Normalization]], Objective]
) -> None:
    """
    Register a new objective factory under ``name``.
    """
    _OBJECTIVES[name] = factory


def get_normalization(name: str, spec: FunctionSpec) -> Normalization:
    try:
        factory = _NORMALIZATIONS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown normalization {name!r}, choose one of {sorted(_NORMALIZATIONS)}"
        )
    return factory(spec)


def get_objective(
    name: str, spec: FunctionSpec, normalization: Optional[Normalization] = None
) -> Objective:
    try:
        factory = _OBJECTIVES[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown objective {name!r}, choose one of {sorted(_OBJECTIVES)}"
        )
    return factory(spec, normalization)


def get_supported_normalizations() -> Set[str]:
    return set(_NORMALIZATIONS)


def get_supported_objectives() -> Set[str]:
    return set(_OBJECTIVES)


def check_gradient(
    value: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    h: float = 1e-6,
) -> float:
    """
    Compare ``grad(x)`` with central differences of ``value`` around ``x``.

    Returns
    -------
    ``float``
        The largest coordinatewise error, relative to ``max(1, |grad(x)|_inf)``.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(grad(x), dtype=float)
    fd = np.empty_like(x)
    for k in range(x.size):
        step = np.zeros_like(x)
        step[k] = h
        fd[k] = (value(x + step) - value(x - step)) / (2.0 * h)
    error = float(np.max(np.abs(fd - g))) / max(1.0, float(np.max(np.abs(g))))
    logger.debug("Gradient check at %d coordinates: relative error %.3e", x.size, error)
    return error
