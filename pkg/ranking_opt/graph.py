"""
Link-classified graphs: parsing, serialization, weighted adjacency assembly and box projection.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import (
    Dict,
    FrozenSet,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
import scipy.sparse

from .bundle import AtomicFile
from .common import GraphFormatError, PathOrStr

logger = logging.getLogger(__name__)

Arc = Tuple[int, int]

SparseMatrix = scipy.sparse.csr_matrix
"""
Nonnegative matrices are stored in compressed sparse row layout.
"""

DATA_ROOT = Path(__file__).parent / "data"

_ARC_CLASSES = {"o": "obligatory", "p": "prohibited", "f": "facultative"}


@dataclass(frozen=True)
class LinkGraph:
    """
    A node set together with a partition of the candidate arcs into obligatory, prohibited and
    facultative arcs.

    The order of :attr:`facultative` defines the coordinate order of every weight vector.
    """

    n: int
    """
    Number of nodes. Nodes are the integers ``0, ..., n - 1``.
    """

    obligatory: FrozenSet[Arc] = frozenset()
    """
    Arcs that always carry weight 1.
    """

    prohibited: FrozenSet[Arc] = frozenset()
    """
    Arcs that always carry weight 0.
    """

    facultative: Tuple[Arc, ...] = ()
    """
    Arcs whose weight is a decision variable in ``[0, 1]``.
    """

    target_set: FrozenSet[int] = frozenset()
    """
    Nodes whose scores the objective aggregates.
    """

    labels: Mapping[int, str] = field(default_factory=dict, compare=False)
    """
    Optional node names.
    """

    allow_self_loops: bool = field(default=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "obligatory", frozenset(self.obligatory))
        object.__setattr__(self, "prohibited", frozenset(self.prohibited))
        object.__setattr__(self, "facultative", tuple(tuple(a) for a in self.facultative))
        object.__setattr__(self, "target_set", frozenset(self.target_set))
        self.validate()

    def validate(self) -> None:
        if self.n < 1:
            raise GraphFormatError(f"graph must have at least one node, got n={self.n}")
        for name, arcs in (
            ("obligatory", self.obligatory),
            ("prohibited", self.prohibited),
            ("facultative", self.facultative),
        ):
            for i, j in arcs:
                if not (0 <= i < self.n and 0 <= j < self.n):
                    raise GraphFormatError(f"{name} arc ({i}, {j}) out of range for n={self.n}")
        if len(set(self.facultative)) != len(self.facultative):
            raise GraphFormatError("facultative list contains duplicate arcs")
        facultative = set(self.facultative)
        for a, b, name_a, name_b in (
            (self.obligatory, self.prohibited, "obligatory", "prohibited"),
            (self.obligatory, facultative, "obligatory", "facultative"),
            (self.prohibited, facultative, "prohibited", "facultative"),
        ):
            both = a & b
            if both:
                arc = min(both)
                raise GraphFormatError(f"arc {arc} is both {name_a} and {name_b}")
        for node in self.target_set:
            if not 0 <= node < self.n:
                raise GraphFormatError(f"target node {node} out of range for n={self.n}")
        if not self.allow_self_loops:
            controlled = self.controlled_pages()
            for i, j in list(self.facultative) + sorted(self.obligatory):
                if i == j and i in controlled:
                    raise GraphFormatError(f"self-loop ({i}, {i}) on controlled page {i}")

    @classmethod
    def from_controlled(
        cls,
        n: int,
        obligatory: Iterable[Arc],
        controlled: Iterable[int],
        prohibited: Iterable[Arc] = (),
        target_set: Optional[Iterable[int]] = None,
        labels: Optional[Mapping[int, str]] = None,
    ) -> "LinkGraph":
        """
        Build a graph where every outlink of a controlled page that is neither obligatory nor
        prohibited, and is not a self-link, is facultative. The target set defaults to the
        controlled pages.
        """
        obligatory = frozenset(obligatory)
        prohibited = frozenset(prohibited)
        controlled = sorted(set(controlled))
        facultative = [
            (i, j)
            for i in controlled
            for j in range(n)
            if j != i and (i, j) not in obligatory and (i, j) not in prohibited
        ]
        return cls(
            n=n,
            obligatory=obligatory,
            prohibited=prohibited,
            facultative=tuple(facultative),
            target_set=frozenset(controlled if target_set is None else target_set),
            labels=dict(labels or {}),
        )

    def controlled_pages(self) -> FrozenSet[int]:
        """
        The sources of facultative arcs.
        """
        return frozenset(i for i, _ in self.facultative)

    @property
    def num_facultative(self) -> int:
        return len(self.facultative)

    @cached_property
    def facultative_rows(self) -> np.ndarray:
        return np.array([i for i, _ in self.facultative], dtype=np.int64)

    @cached_property
    def facultative_cols(self) -> np.ndarray:
        return np.array([j for _, j in self.facultative], dtype=np.int64)

    @cached_property
    def facultative_index(self) -> Dict[Arc, int]:
        return {arc: k for k, arc in enumerate(self.facultative)}

    @cached_property
    def target_indicator(self) -> np.ndarray:
        r = np.zeros(self.n)
        r[sorted(self.target_set)] = 1.0
        return r

    @cached_property
    def _pattern(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        # Structural pattern shared by every assembled matrix: obligatory arcs first, then the
        # facultative arcs in list order, permuted into row-major order.
        obligatory = sorted(self.obligatory)
        rows = np.array([i for i, _ in obligatory] + list(self.facultative_rows), dtype=np.int64)
        cols = np.array([j for _, j in obligatory] + list(self.facultative_cols), dtype=np.int64)
        order = np.lexsort((cols, rows))
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=self.n), out=indptr[1:])
        return order, cols[order], indptr

    def label(self, node: int) -> str:
        return self.labels.get(node, str(node))


def project_box(x: Sequence[float], lower: float = 0.0, upper: float = 1.0) -> np.ndarray:
    """
    Project ``x`` onto the box ``[lower, upper]^k`` by clamping every coordinate.
    """
    return np.clip(np.asarray(x, dtype=float), lower, upper)


def assemble(g: LinkGraph, x: Sequence[float]) -> SparseMatrix:
    """
    Assemble the weighted adjacency matrix ``A(x)``: 1 on obligatory arcs, ``x[k]`` on the k-th
    facultative arc and 0 elsewhere.

    Facultative arcs with weight 0 stay in the sparsity pattern, so the pattern, and therefore the
    set of available derivative coordinates, does not depend on ``x``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (g.num_facultative,):
        raise ValueError(
            f"weight vector has shape {x.shape}, expected ({g.num_facultative},) for this graph"
        )
    order, indices, indptr = g._pattern
    data = np.concatenate([np.ones(len(g.obligatory)), x])[order]
    return scipy.sparse.csr_matrix((data, indices.copy(), indptr.copy()), shape=(g.n, g.n))


def validate_sparse(M: SparseMatrix) -> None:
    """
    Check that ``M`` is a structurally valid square CSR matrix with nonnegative values.
    """
    if not scipy.sparse.isspmatrix_csr(M):
        raise TypeError(f"expected a CSR matrix, got {type(M).__name__}")
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    M.check_format(full_check=True)
    if M.nnz and M.data.min() < 0:
        raise ValueError("matrix has negative entries")


def parse_graph(text: str, allow_self_loops: bool = False) -> LinkGraph:
    """
    Parse an edge-list document.

    The first non-comment line is ``n <count>``. Every other line is one of

    * ``o <src> <dst>``, ``p <src> <dst>``, ``f <src> <dst>`` for an obligatory, prohibited
      or facultative arc,
    * ``t <node>`` to put a node in the target set,
    * ``label <node> <name>`` to name a node.

    ``#`` starts a comment. Repeated identical arc lines collapse to one arc, and facultative arcs
    keep the order of their first occurrence.
    """
    n: Optional[int] = None
    classes: Dict[Arc, Tuple[str, int]] = {}
    facultative: List[Arc] = []
    targets: List[int] = []
    labels: Dict[int, str] = {}

    def parse_node(token: str, line_number: int) -> int:
        try:
            node = int(token)
        except ValueError:
            raise GraphFormatError(f"expected a node index, got {token!r}", line_number)
        assert n is not None
        if not 0 <= node < n:
            raise GraphFormatError(f"node {node} out of range for n={n}", line_number)
        return node

    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if n is None:
            if tokens[0] != "n" or len(tokens) != 2:
                raise GraphFormatError("first line must be 'n <count>'", line_number)
            try:
                n = int(tokens[1])
            except ValueError:
                raise GraphFormatError(f"invalid node count {tokens[1]!r}", line_number)
            if n < 1:
                raise GraphFormatError(f"node count must be positive, got {n}", line_number)
            continue
        kind = tokens[0]
        if kind in _ARC_CLASSES:
            if len(tokens) != 3:
                raise GraphFormatError(f"expected '{kind} <src> <dst>'", line_number)
            arc = (parse_node(tokens[1], line_number), parse_node(tokens[2], line_number))
            if arc in classes:
                previous, previous_line = classes[arc]
                if previous != kind:
                    raise GraphFormatError(
                        f"arc {arc} is {_ARC_CLASSES[kind]} but was declared "
                        f"{_ARC_CLASSES[previous]} on line {previous_line}",
                        line_number,
                    )
                continue
            classes[arc] = (kind, line_number)
            if kind == "f":
                facultative.append(arc)
        elif kind == "t":
            if len(tokens) != 2:
                raise GraphFormatError("expected 't <node>'", line_number)
            targets.append(parse_node(tokens[1], line_number))
        elif kind == "label":
            if len(tokens) < 3:
                raise GraphFormatError("expected 'label <node> <name>'", line_number)
            labels[parse_node(tokens[1], line_number)] = " ".join(tokens[2:])
        elif kind == "n":
            raise GraphFormatError("node count declared twice", line_number)
        else:
            raise GraphFormatError(f"unknown line type {kind!r}", line_number)

    if n is None:
        raise GraphFormatError("missing 'n <count>' line")

    try:
        return LinkGraph(
            n=n,
            obligatory=frozenset(a for a, (k, _) in classes.items() if k == "o"),
            prohibited=frozenset(a for a, (k, _) in classes.items() if k == "p"),
            facultative=tuple(facultative),
            target_set=frozenset(targets),
            labels=labels,
            allow_self_loops=allow_self_loops,
        )
    except GraphFormatError as err:
        # Self-loop violations are only detectable once the controlled set is known.
        bad = [classes.get((i, i)) for i in range(n) if (i, i) in classes]
        line_number = min((line for _, line in bad if line is not None), default=None)
        raise GraphFormatError(str(err), line_number) from None


def serialize_graph(g: LinkGraph) -> str:
    """
    Inverse of :func:`parse_graph`.
    """
    lines = [f"n {g.n}"]
    lines.extend(f"label {node} {name}" for node, name in sorted(g.labels.items()))
    lines.extend(f"t {node}" for node in sorted(g.target_set))
    lines.extend(f"o {i} {j}" for i, j in sorted(g.obligatory))
    lines.extend(f"p {i} {j}" for i, j in sorted(g.prohibited))
    lines.extend(f"f {i} {j}" for i, j in g.facultative)
    return "\n".join(lines) + "\n"


def parse_weights(text: str, g: LinkGraph) -> np.ndarray:
    """
    Parse ``<src> <dst> <weight>`` lines into a weight vector for ``g``.
    Facultative arcs that are not listed get weight 0.
    """
    x = np.zeros(g.num_facultative)
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 3:
            raise GraphFormatError("expected '<src> <dst> <weight>'", line_number)
        try:
            arc = (int(tokens[0]), int(tokens[1]))
            weight = float(tokens[2])
        except ValueError:
            raise GraphFormatError(f"cannot parse weight line {line!r}", line_number)
        if arc not in g.facultative_index:
            raise GraphFormatError(f"arc {arc} is not facultative", line_number)
        if not 0.0 <= weight <= 1.0:
            raise GraphFormatError(f"weight {weight} outside of [0, 1]", line_number)
        x[g.facultative_index[arc]] = weight
    return x


def serialize_weights(g: LinkGraph, x: Sequence[float]) -> str:
    """
    Write one ``<src> <dst> <weight>`` line per facultative arc, in facultative-list order.
    """
    return "".join(f"{i} {j} {w!r}\n" for (i, j), w in zip(g.facultative, map(float, x)))


def _read_document(path: Path, kind: str) -> str:
    if not path.is_file():
        raise FileNotFoundError(f"{kind} file {path} not found")
    try:
        return path.read_text(encoding="utf-8")
    except UnicodeDecodeError as err:
        raise GraphFormatError(f"{kind} file {path} is not valid UTF-8 ({err.reason})") from err


def load_graph(path: PathOrStr, allow_self_loops: bool = False) -> LinkGraph:
    path = Path(path)
    logger.debug("Loading graph from %s", path)
    return parse_graph(_read_document(path, "graph"), allow_self_loops=allow_self_loops)


def save_graph(g: LinkGraph, path: PathOrStr) -> None:
    with AtomicFile(path) as f:
        f.write(serialize_graph(g))


def load_weights(path: PathOrStr, g: LinkGraph) -> np.ndarray:
    return parse_weights(_read_document(Path(path), "weights"), g)


def save_weights(g: LinkGraph, x: Sequence[float], path: PathOrStr) -> None:
    with AtomicFile(path) as f:
        f.write(serialize_weights(g, x))


def example_site() -> LinkGraph:
    """
    The 21-page example web site with 3 controlled pages: every non-obligatory, non-self outlink
    of a controlled page is facultative, and the target set is the controlled set.
    """
    return load_graph(DATA_ROOT / "example_site.txt")


def example_site_weights(which: str = "first") -> np.ndarray:
    """
    One of the two documented strict local maxima of the relaxed HITS problem on
    :func:`example_site`: ``"first"`` carries a single fractional arc 17→7 at 0.18,
    ``"second"`` a single fractional arc 17→10 at 0.23 (1-based page numbers).
    """
    if which not in ("first", "second"):
        raise ValueError(f"unknown example weights {which!r}")
    return load_weights(DATA_ROOT / f"example_site_{which}.weights", example_site())
