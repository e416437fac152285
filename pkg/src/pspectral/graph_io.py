"""Graphs: Matrix Market ingestion, validation and seeded synthetic families.

Edge counts ``m`` are always *undirected* (each ``{i, j}`` once), even though
the adjacency matrix stores both triangles.
"""

from dataclasses import asdict, dataclass, fields
import io
import logging
import os

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .algebra import SparseMatrix
from .cluster import ClusterAssignment
from .errors import ConfigError, GraphValidationError, InputError, MatrixMarketError

log = logging.getLogger(__name__)

__all__ = [
    "Graph", "SyntheticSpec", "parse_matrix_market", "read_matrix_market",
    "write_matrix_market", "generate_synthetic", "connected_components",
]


class Graph:
    """Undirected weighted graph backed by a symmetric :class:`SparseMatrix`.

    Invariants: bitwise symmetric adjacency, no stored diagonal, all stored
    weights strictly positive.
    """

    def __init__(self, adjacency, *, check=True):
        self.adjacency = adjacency
        if check:
            self.validate()
        self.adjacency.symmetric = True

    @classmethod
    def from_edges(cls, n, i, j, w=None):
        """Build from undirected edge lists; each ``{i, j}`` must appear once."""
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        w = np.ones(i.shape, dtype=np.float64) if w is None else np.asarray(w, dtype=np.float64)
        if np.any(i == j):
            raise GraphValidationError("self-loops are not allowed")
        rows = np.concatenate([i, j])
        cols = np.concatenate([j, i])
        vals = np.concatenate([w, w])
        try:
            A = SparseMatrix.from_coo((n, n), rows, cols, vals)
        except ValueError as exc:
            raise GraphValidationError(str(exc)) from None
        return cls(A)

    @classmethod
    def from_dense(cls, W):
        return cls(SparseMatrix.from_dense(np.asarray(W, dtype=np.float64)))

    @property
    def n(self):
        return self.adjacency.nrows

    @property
    def m(self):
        return self.adjacency.nnz // 2

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"

    def validate(self):
        A = self.adjacency
        if A.nrows != A.ncols:
            raise GraphValidationError(f"adjacency must be square, got {A.shape}")
        if A.nrows < 1:
            raise GraphValidationError("graph must have at least one node")
        try:
            A.check()
        except ValueError as exc:
            raise GraphValidationError(str(exc)) from None
        if np.any(A.row_indices() == A.indices):
            raise GraphValidationError("adjacency has nonzero diagonal (self-loops)")
        if A.nnz and not np.all(A.data > 0):
            raise GraphValidationError("edge weights must be positive")
        if not A.is_symmetric():
            raise GraphValidationError("adjacency is not exactly symmetric")

    def degrees(self):
        return np.asarray(self.adjacency.to_scipy().sum(axis=1)).ravel()

    def isolated(self):
        """Indices of nodes without incident edges."""
        return np.flatnonzero(np.diff(self.adjacency.indptr) == 0)

    def edges(self):
        """Undirected edges ``(i, j, w)`` with ``i < j``, in row order."""
        A = self.adjacency
        rows = A.row_indices()
        upper = rows < A.indices
        return rows[upper], A.indices[upper], A.data[upper]

    def to_dense(self):
        return self.adjacency.to_dense()

    def laplacian_dense(self):
        W = self.to_dense()
        return np.diag(W.sum(axis=1)) - W

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        a, b = self.adjacency, other.adjacency
        return (a.shape == b.shape and np.array_equal(a.indptr, b.indptr)
                and np.array_equal(a.indices, b.indices)
                and np.array_equal(a.data, b.data))

    __hash__ = None


# ---------------------------------------------------------------------------
# Matrix Market


_FIELDS = ("real", "integer", "pattern")
_SYMMETRIES = ("general", "symmetric")


def _text_lines(stream):
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    for raw in stream:
        if isinstance(raw, bytes):
            raw = raw.decode("ascii", errors="replace")
        yield raw


def parse_matrix_market(stream):
    """Parse a Matrix Market *coordinate* stream into a :class:`Graph`.

    ``stream`` is an iterable of lines (text or bytes), e.g. an open file,
    or a ``bytes`` object. Pattern entries get weight 1.0, symmetric storage
    is mirrored, general storage is symmetrized with ``max(w_ij, w_ji)``,
    and self-loops are dropped with a warning. Malformed input raises
    :class:`MatrixMarketError` carrying the offending line number.
    """
    lines = _text_lines(stream)
    lineno = 0
    header = None
    for raw in lines:
        lineno += 1
        header = raw.strip()
        break
    if header is None:
        raise MatrixMarketError("empty stream", 1)
    tokens = header.split()
    if len(tokens) != 5 or tokens[0].lower() != "%%matrixmarket":
        raise MatrixMarketError("expected '%%MatrixMarket matrix coordinate <field> <symmetry>'", 1)
    obj, fmt, field, symmetry = (t.lower() for t in tokens[1:])
    if obj != "matrix" or fmt != "coordinate":
        raise MatrixMarketError(f"unsupported object/format '{obj} {fmt}'", 1)
    if field not in _FIELDS:
        raise MatrixMarketError(f"unsupported field '{field}'", 1)
    if symmetry not in _SYMMETRIES:
        raise MatrixMarketError(f"unsupported symmetry '{symmetry}'", 1)

    size = None
    for raw in lines:
        lineno += 1
        s = raw.strip()
        if not s or s.startswith("%"):
            continue
        parts = s.split()
        if len(parts) != 3:
            raise MatrixMarketError("size line must hold 'rows cols entries'", lineno)
        try:
            size = tuple(int(x) for x in parts)
        except ValueError:
            raise MatrixMarketError("size line must hold integers", lineno) from None
        break
    if size is None:
        raise MatrixMarketError("missing size line", lineno)
    nrows, ncols, nnz = size
    if nrows <= 0 or ncols <= 0:
        raise MatrixMarketError(f"nonpositive dimensions {nrows}x{ncols}", lineno)
    if nrows != ncols:
        raise MatrixMarketError(f"adjacency must be square, got {nrows}x{ncols}", lineno)
    if nnz < 0:
        raise MatrixMarketError("negative entry count", lineno)
    n = nrows

    ntok = 2 if field == "pattern" else 3
    cast = int if field == "integer" else float
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.ones(nnz, dtype=np.float64)
    where = np.empty(nnz, dtype=np.int64)
    count = 0
    for raw in lines:
        lineno += 1
        s = raw.strip()
        if not s or s.startswith("%"):
            continue
        parts = s.split()
        if len(parts) != ntok:
            raise MatrixMarketError(f"expected {ntok} fields, got {len(parts)}", lineno)
        if count == nnz:
            raise MatrixMarketError(f"more entries than the declared {nnz}", lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
            w = cast(parts[2]) if ntok == 3 else 1.0
        except ValueError:
            raise MatrixMarketError(f"cannot parse entry '{s}'", lineno) from None
        if not (1 <= i <= n and 1 <= j <= n):
            raise MatrixMarketError(f"index ({i}, {j}) out of range for n={n}", lineno)
        if not w > 0 or not np.isfinite(w):
            raise MatrixMarketError(f"weight {w!r} is not positive", lineno)
        rows[count], cols[count], vals[count], where[count] = i - 1, j - 1, w, lineno
        count += 1
    if count != nnz:
        raise MatrixMarketError(f"declared {nnz} entries, found {count}", lineno)

    sym = symmetry == "symmetric"
    # exact repeats are rejected; for symmetric storage (i, j) and (j, i) repeat too
    key_a, key_b = (np.minimum(rows, cols), np.maximum(rows, cols)) if sym else (rows, cols)
    keys = key_a * n + key_b
    order = np.argsort(keys, kind="stable")
    dup = np.flatnonzero(keys[order][1:] == keys[order][:-1])
    if dup.size:
        t = order[dup + 1]
        bad = t[np.argmin(where[t])]
        raise MatrixMarketError(
            f"duplicate entry ({rows[bad] + 1}, {cols[bad] + 1})", int(where[bad]))

    loops = rows == cols
    if np.any(loops):
        log.warning("dropping %d self-loop(s)", int(loops.sum()))
        keep = ~loops
        rows, cols, vals = rows[keep], cols[keep], vals[keep]

    # collapse to one weight per unordered pair (max rule for general storage)
    lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
    pair = lo * n + hi
    uniq, inverse = np.unique(pair, return_inverse=True)
    w = np.zeros(uniq.shape[0])
    np.maximum.at(w, inverse, vals)
    ui, uj = uniq // n, uniq % n
    g = Graph.from_edges(n, ui, uj, w)
    iso = g.isolated()
    if iso.size:
        log.warning("graph has %d isolated vertex(es)", iso.size)
    return g


def read_matrix_market(path):
    try:
        with open(path, "rb") as fh:
            return parse_matrix_market(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def write_matrix_market(g, stream, *, comment=None):
    """Write ``g`` as ``real symmetric`` coordinate data (lower triangle).

    Values use 17 significant digits so that parsing the output recovers
    the weights exactly.
    """
    if isinstance(stream, (str, os.PathLike)):
        with open(stream, "w") as fh:
            return write_matrix_market(g, fh, comment=comment)
    i, j, w = g.edges()
    stream.write("%%MatrixMarket matrix coordinate real symmetric\n")
    if comment:
        for line in comment.splitlines():
            stream.write(f"% {line}\n")
    stream.write(f"{g.n} {g.n} {g.m}\n")
    # lower triangle: row index > column index
    order = np.lexsort((i, j))
    for a, b, x in zip(j[order], i[order], w[order]):
        stream.write(f"{a + 1} {b + 1} {x:.17g}\n")


# ---------------------------------------------------------------------------
# synthetic graphs


FAMILIES = ("sbm", "grid2d", "ring-of-cliques")


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic graph family.

    ``sbm`` uses ``blocks``, ``block_size``, ``p_in``, ``p_out``;
    ``grid2d`` uses ``rows``, ``cols``; ``ring-of-cliques`` uses
    ``cliques``, ``clique_size`` and ``bridge_weight``. ``weight`` is the
    weight of every non-bridge edge.
    """

    family: str
    blocks: int = 4
    block_size: int = 50
    p_in: float = 0.1
    p_out: float = 0.01
    rows: int = 32
    cols: int = 32
    cliques: int = 4
    clique_size: int = 5
    bridge_weight: float = 1.0
    weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        for name in ("blocks", "block_size", "rows", "cols", "cliques", "clique_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("p_in", "p_out"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if not (self.weight > 0 and self.bridge_weight > 0):
            raise ConfigError("weights must be positive")
        if self.family == "grid2d" and (self.rows < 2 or self.cols < 2):
            raise ConfigError("grid2d needs rows >= 2 and cols >= 2")
        if self.family == "ring-of-cliques" and (self.cliques < 2 or self.clique_size < 2):
            raise ConfigError("ring-of-cliques needs cliques >= 2 and clique_size >= 2")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def k(self):
        """Number of ground-truth clusters."""
        return {"sbm": self.blocks, "grid2d": 4, "ring-of-cliques": self.cliques}[self.family]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_mapping(cls, values):
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown synthetic parameter {key!r}")
            if isinstance(raw, str):
                raw = raw.strip()
                typ = known[key]
                try:
                    if typ in ("int", int):
                        raw = int(raw, 0)
                    elif typ in ("float", float):
                        raw = float(raw)
                except ValueError:
                    raise ConfigError(f"bad value {raw!r} for {key}") from None
            kwargs[key] = raw
        if "family" not in kwargs:
            raise ConfigError("synthetic spec needs a family")
        return cls(**kwargs)

    @classmethod
    def parse(cls, text):
        """Parse ``family:key=value,...`` or a path to a key-value file.

        The file holds one ``key = value`` per line; ``#`` starts a comment.
        """
        if os.path.isfile(text):
            values = {}
            with open(text) as fh:
                for lineno, line in enumerate(fh, 1):
                    line = line.split("#", 1)[0].strip()
                    if not line:
                        continue
                    if "=" not in line:
                        raise ConfigError(f"{text}:{lineno}: expected key = value")
                    key, value = line.split("=", 1)
                    values[key.strip()] = value.strip()
            return cls.from_mapping(values)
        family, _, rest = text.partition(":")
        values = {"family": family.strip()}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            if "=" not in item:
                raise ConfigError(f"expected key=value, got {item!r}")
            key, value = item.split("=", 1)
            values[key] = value
        return cls.from_mapping(values)


def _upper_pairs(s, idx):
    """Decode row-major indices into the strict upper triangle of an s x s block."""
    starts = np.arange(s, dtype=np.int64)
    starts = starts * s - starts * (starts + 1) // 2
    i = np.searchsorted(starts, idx, side="right") - 1
    j = i + 1 + (idx - starts[i])
    return i, j


def _sbm(spec, rng):
    s, K = spec.block_size, spec.blocks
    I, J = [], []
    for a in range(K):
        for b in range(a, K):
            if a == b:
                total = s * (s - 1) // 2
                prob = spec.p_in
            else:
                total = s * s
                prob = spec.p_out
            if total == 0 or prob == 0.0:
                continue
            count = rng.binomial(total, prob)
            idx = np.sort(rng.choice(total, size=count, replace=False))
            if a == b:
                i, j = _upper_pairs(s, idx)
            else:
                i, j = idx // s, idx % s
            I.append(a * s + i)
            J.append(b * s + j)
    n = s * K
    i = np.concatenate(I) if I else np.empty(0, dtype=np.int64)
    j = np.concatenate(J) if J else np.empty(0, dtype=np.int64)
    labels = np.repeat(np.arange(1, K + 1), s)
    return n, i, j, np.full(i.shape, spec.weight), labels


def _grid2d(spec):
    R, C = spec.rows, spec.cols
    node = np.arange(R * C, dtype=np.int64).reshape(R, C)
    i = np.concatenate([node[:, :-1].ravel(), node[:-1, :].ravel()])
    j = np.concatenate([node[:, 1:].ravel(), node[1:, :].ravel()])
    r, c = np.divmod(np.arange(R * C), C)
    labels = 2 * ((2 * r) // R) + (2 * c) // C + 1
    return R * C, i, j, np.full(i.shape, spec.weight), labels


def _ring_of_cliques(spec):
    K, s = spec.cliques, spec.clique_size
    a, b = np.triu_indices(s, 1)
    offs = np.arange(K, dtype=np.int64)[:, None] * s
    i = (offs + a).ravel()
    j = (offs + b).ravel()
    w = np.full(i.shape, spec.weight)
    bi = np.arange(K, dtype=np.int64) * s + s - 1
    bj = (np.arange(K, dtype=np.int64) + 1) % K * s
    labels = np.repeat(np.arange(1, K + 1), s)
    return (K * s, np.concatenate([i, bi]), np.concatenate([j, bj]),
            np.concatenate([w, np.full(K, spec.bridge_weight)]), labels)


def generate_synthetic(spec):
    """Draw ``(Graph, ground-truth ClusterAssignment)`` for ``spec``.

    A pure function of ``spec`` (including its seed).
    """
    if spec.family == "sbm":
        rng = np.random.default_rng(spec.seed)
        n, i, j, w, labels = _sbm(spec, rng)
    elif spec.family == "grid2d":
        n, i, j, w, labels = _grid2d(spec)
    else:
        n, i, j, w, labels = _ring_of_cliques(spec)
    g = Graph.from_edges(n, i, j, w)
    return g, ClusterAssignment(labels, spec.k)


def connected_components(g):
    """Component label per node, numbered 0, 1, ... in order of smallest member."""
    S = sp.csr_matrix((np.ones(g.adjacency.nnz), g.adjacency.indices, g.adjacency.indptr),
                      shape=(g.n, g.n))
    _, raw = csgraph.connected_components(S, directed=False)
    _, first = np.unique(raw, return_index=True)
    rank = np.empty(first.shape[0], dtype=np.int64)
    rank[np.argsort(first)] = np.arange(first.shape[0])
    return rank[raw]
