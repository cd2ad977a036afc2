"""
Random problem instances for tests and benchmarks.

All generators take a :class:`numpy.random.Generator` or an integer seed, so an instance is
fully determined by its parameters and the seed.
"""

import logging
from typing import List, Optional, Set, Tuple, Union

import numpy as np

from .common import ConfigurationError
from .graph import Arc, LinkGraph

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.Generator, None]


def _rng(seed: Seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _sample_facultative(
    n: int,
    num_facultative: int,
    obligatory: Set[Arc],
    rng: np.random.Generator,
    controlled: Optional[np.ndarray] = None,
) -> List[Arc]:
    """
    Sample distinct non-self arcs that are not obligatory, with sources in ``controlled`` when
    given.
    """
    sources = np.arange(n) if controlled is None else np.asarray(controlled)
    source_set = set(sources.tolist())
    capacity = len(sources) * (n - 1) - sum(1 for i, _ in obligatory if i in source_set)
    if num_facultative > capacity:
        raise ConfigurationError(
            f"cannot place {num_facultative} facultative arcs, only {capacity} candidates"
        )
    chosen: List[Arc] = []
    seen: Set[Arc] = set()
    while len(chosen) < num_facultative:
        batch = num_facultative - len(chosen)
        rows = rng.choice(sources, size=2 * batch)
        cols = rng.integers(0, n, size=2 * batch)
        for i, j in zip(rows.tolist(), cols.tolist()):
            arc = (i, j)
            if i == j or arc in obligatory or arc in seen:
                continue
            seen.add(arc)
            chosen.append(arc)
            if len(chosen) == num_facultative:
                break
    return chosen


def random_strongly_connected(
    n: int,
    num_facultative: int,
    seed: Seed = None,
    density: float = 0.1,
    num_targets: Optional[int] = None,
) -> LinkGraph:
    """
    A random graph whose obligatory arcs alone make it strongly connected.

    The obligatory arcs are a Hamiltonian cycle through a random permutation of the nodes plus
    every other non-self arc independently with probability ``density``. ``num_facultative``
    further arcs are facultative. The target set is a random subset of ``num_targets`` nodes
    (default ``max(1, n // 4)``).
    """
    if n < 2:
        raise ConfigurationError(f"need at least 2 nodes, got {n}")
    if not 0.0 <= density < 1.0:
        raise ConfigurationError(f"density must lie in [0, 1), got {density}")
    rng = _rng(seed)
    order = rng.permutation(n)
    obligatory: Set[Arc] = {(int(order[k]), int(order[(k + 1) % n])) for k in range(n)}
    extra = np.argwhere(rng.random((n, n)) < density)
    obligatory.update((int(i), int(j)) for i, j in extra if i != j)
    facultative = _sample_facultative(n, num_facultative, obligatory, rng)
    k = max(1, n // 4) if num_targets is None else num_targets
    targets = rng.choice(n, size=min(k, n), replace=False)
    return LinkGraph(
        n=n,
        obligatory=frozenset(obligatory),
        facultative=tuple(facultative),
        target_set=frozenset(int(t) for t in targets),
    )


def scale_free(
    n: int,
    num_facultative: int,
    seed: Seed = None,
    out_degree: int = 3,
    num_controlled: Optional[int] = None,
    back_links: bool = True,
) -> LinkGraph:
    """
    A web-like graph grown by preferential attachment: every new node links to ``out_degree``
    earlier nodes picked with probability proportional to their in-degree plus one.

    With ``back_links`` every node also gets an obligatory arc from one random earlier node, so
    the obligatory graph is strongly connected through node 0. The facultative arcs leave
    ``num_controlled`` random pages (default: one page per ten facultative arcs), and the target
    set is the controlled set.
    """
    if n < 2:
        raise ConfigurationError(f"need at least 2 nodes, got {n}")
    if out_degree < 1:
        raise ConfigurationError(f"out_degree must be positive, got {out_degree}")
    rng = _rng(seed)
    obligatory: Set[Arc] = set()
    # Every node appears once per received arc plus once on its own.
    endpoints: List[int] = [0]
    for node in range(1, n):
        picks = {int(endpoints[k]) for k in rng.integers(0, len(endpoints), size=out_degree)}
        for dst in picks:
            obligatory.add((node, dst))
            endpoints.append(dst)
        if back_links:
            src = int(rng.integers(0, node))
            obligatory.add((src, node))
        endpoints.append(node)
    if num_controlled is None:
        num_controlled = max(1, -(-num_facultative // 10))
    controlled = rng.choice(n, size=min(num_controlled, n), replace=False)
    facultative = _sample_facultative(n, num_facultative, obligatory, rng, controlled)
    logger.debug(
        "Scale-free instance: n=%d, %d obligatory arcs, %d facultative arcs",
        n,
        len(obligatory),
        len(facultative),
    )
    return LinkGraph(
        n=n,
        obligatory=frozenset(obligatory),
        facultative=tuple(facultative),
        target_set=frozenset(int(c) for c in controlled),
    )


def random_weights(g: LinkGraph, seed: Seed = None) -> np.ndarray:
    """
    Uniform random weights in ``[0, 1]`` for the facultative arcs of ``g``.
    """
    return _rng(seed).random(g.num_facultative)


def random_positive_matrix(n: int, seed: Seed = None, low: float = 0.1) -> np.ndarray:
    """
    A dense entrywise positive matrix with entries uniform in ``[low, 1 + low)``.
    """
    return low + _rng(seed).random((n, n))


def known_spectrum_matrix(second: float, scale: float = 3.0) -> Tuple[np.ndarray, float]:
    """
    A 2x2 nonnegative matrix with eigenvalues ``1`` and ``second``, similar to a symmetric one
    through ``diag(1, scale)`` so that the uniform start is not an eigenvector.
    Returns the matrix and the expected linear rate ``|second|``.
    """
    S = 0.5 * np.array([[1.0 + second, 1.0 - second], [1.0 - second, 1.0 + second]])
    D = np.diag([1.0, scale])
    return np.linalg.solve(D, S @ D), abs(second)
