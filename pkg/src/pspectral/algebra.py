"""Semiring-parameterized sparse linear algebra.

A small GraphBLAS-flavoured substrate: a row-compressed :class:`SparseMatrix`,
plain 1-D numpy arrays as dense vectors, and kernels parameterized by a
:class:`Semiring` (``add`` monoid plus ``mul`` operator).

Kernels are compiled with numba and parallelized across *output* indices
only. Every reduction runs in ascending index order inside one worker, so
results are bitwise identical for any worker count. Reductions that are
split across workers (:func:`dot`, :func:`gram`) use a fixed block
partition that does not depend on the worker count either.

Operators passed to kernels must be numba ``@njit`` functions to take the
compiled path; plain Python callables fall back to an interpreted loop with
identical semantics (useful for experiments, slow for real graphs).
"""

from dataclasses import dataclass
import math
import os
from typing import Any, Callable

import numba
import numpy as np
from numba import njit, prange
from numba.core.registry import CPUDispatcher

from .errors import ConfigError, ShapeError

__all__ = [
    "Monoid", "Semiring", "SparseMatrix", "Context",
    "plus", "times", "minus", "minimum", "maximum",
    "PLUS", "PLUS_INT", "TIMES", "MIN", "MAX",
    "PLUS_TIMES", "MIN_PLUS", "PLUS_TIMES_INT", "SHIPPED_SEMIRINGS",
    "vxm", "ewise_apply", "apply", "fold", "fill",
    "apply_edges", "reduce_rows", "dot", "gram", "lincomb",
    "default_threads", "max_threads",
]

# Partition size for split reductions. Fixed so that the summation tree is a
# function of the vector length only.
REDUCTION_BLOCK = 4096

THREADS_ENV = "PSPECTRAL_THREADS"


# ---------------------------------------------------------------------------
# scalar operators


@njit(cache=True)
def plus(a, b):
    return a + b


@njit(cache=True)
def times(a, b):
    return a * b


@njit(cache=True)
def minus(a, b):
    return a - b


@njit(cache=True)
def minimum(a, b):
    return a if a <= b else b


@njit(cache=True)
def maximum(a, b):
    return a if a >= b else b


@dataclass(frozen=True)
class Monoid:
    """Associative, commutative operator with its identity element."""

    name: str
    op: Callable[[Any, Any], Any]
    identity: Any


@dataclass(frozen=True)
class Semiring:
    """``(add, mul, zero, one)``; ``zero`` is the identity of ``add``."""

    name: str
    add: Monoid
    mul: Callable[[Any, Any], Any]
    one: Any
    dtype: np.dtype = np.dtype(np.float64)

    @property
    def zero(self):
        return self.add.identity


PLUS = Monoid("plus", plus, 0.0)
PLUS_INT = Monoid("plus_int", plus, 0)
TIMES = Monoid("times", times, 1.0)
MIN = Monoid("min", minimum, math.inf)
MAX = Monoid("max", maximum, -math.inf)

PLUS_TIMES = Semiring("plus_times", PLUS, times, 1.0, np.dtype(np.float64))
MIN_PLUS = Semiring("min_plus", MIN, plus, 0.0, np.dtype(np.float64))
PLUS_TIMES_INT = Semiring("plus_times_int", PLUS_INT, times, 1, np.dtype(np.int64))

SHIPPED_SEMIRINGS = (PLUS_TIMES, MIN_PLUS, PLUS_TIMES_INT)


def _jitted(*fs):
    return all(isinstance(f, CPUDispatcher) for f in fs)


def _stable(f):
    # Module-level package operators live as long as the process, so kernels
    # specialised on them can be cached on disk. numba's cache index holds
    # weak references to operator functions and cannot be saved once a
    # transient (e.g. locally defined) operator has been collected.
    qual = getattr(f.py_func, "__qualname__", "")
    return f.py_func.__module__.startswith("pspectral.") and "<locals>" not in qual


# ---------------------------------------------------------------------------
# worker context


def max_threads():
    """Size of the numba worker pool (upper bound for ``Context.threads``)."""
    return numba.config.NUMBA_NUM_THREADS


def default_threads():
    """Worker count from ``$PSPECTRAL_THREADS``, else one per CPU."""
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            threads = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV}={env!r} is not an integer") from None
    else:
        threads = os.cpu_count() or 1
    return max(1, min(threads, max_threads()))


class Context:
    """Kernel execution context holding the worker count.

    Pass it to kernels as ``ctx=``; it can also be used as a ``with`` block
    that sets the worker count for everything executed inside.
    """

    def __init__(self, threads=None):
        if threads is None:
            threads = default_threads()
        threads = int(threads)
        if not 1 <= threads <= max_threads():
            raise ConfigError(
                f"threads must be in [1, {max_threads()}], got {threads}"
            )
        self.threads = threads
        self._saved = []

    def __repr__(self):
        return f"Context(threads={self.threads})"

    def __enter__(self):
        self._saved.append(numba.get_num_threads())
        numba.set_num_threads(self.threads)
        return self

    def __exit__(self, *exc):
        numba.set_num_threads(self._saved.pop())
        return False


def _call(kernel, args):
    try:
        return kernel(*args)
    except ReferenceError:
        # A stale on-disk cache index can name operators that no longer
        # exist; compiling succeeds but saving the index fails.
        twin = _uncached.get(kernel)
        if twin is None:
            raise
        return twin(*args)


def _run(ctx, kernel, *args):
    if ctx is None:
        return _call(kernel, args)
    prev = numba.get_num_threads()
    if prev == ctx.threads:
        return _call(kernel, args)
    numba.set_num_threads(ctx.threads)
    try:
        return _call(kernel, args)
    finally:
        numba.set_num_threads(prev)


# ---------------------------------------------------------------------------
# containers


class SparseMatrix:
    """Row-compressed sparse matrix.

    Rows are stored in order and column indices are strictly increasing
    within each row; absent entries are implicit and carry no value. The
    ``symmetric`` flag promises ``A[i, j] == A[j, i]`` bitwise for every
    stored entry, which lets :func:`vxm` read rows instead of columns.
    """

    __slots__ = ("shape", "indptr", "indices", "data", "symmetric", "_transpose")

    def __init__(self, shape, indptr, indices, data, *, symmetric=False, check=True):
        nrows, ncols = (int(s) for s in shape)
        self.shape = (nrows, ncols)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data)
        self.symmetric = bool(symmetric)
        self._transpose = None
        if check:
            self.check()

    @property
    def nrows(self):
        return self.shape[0]

    @property
    def ncols(self):
        return self.shape[1]

    @property
    def nnz(self):
        return int(self.indices.shape[0])

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return (f"SparseMatrix(shape={self.shape}, nnz={self.nnz}, "
                f"dtype={self.dtype}, symmetric={self.symmetric})")

    def check(self):
        """Validate the storage invariants; raise ``ValueError`` on failure."""
        nrows, ncols = self.shape
        if nrows < 0 or ncols < 0:
            raise ValueError("negative dimension")
        if self.indptr.shape != (nrows + 1,):
            raise ValueError("indptr must have nrows + 1 entries")
        if self.indptr[0] != 0 or self.indptr[-1] != self.nnz:
            raise ValueError("indptr does not span the entry arrays")
        if self.data.shape != self.indices.shape:
            raise ValueError("indices and data differ in length")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("indptr must be non-decreasing")
        if self.nnz:
            if self.indices.min() < 0 or self.indices.max() >= ncols:
                raise ValueError("column index out of range")
            step = np.diff(self.indices)
            rows = self.row_indices()
            same_row = rows[1:] == rows[:-1]
            if np.any(step[same_row] <= 0):
                raise ValueError("column indices must be strictly increasing within a row")
        if self.symmetric and not self.is_symmetric():
            raise ValueError("matrix flagged symmetric is not")

    @classmethod
    def from_coo(cls, shape, rows, cols, values, *, symmetric=False):
        """Build from coordinate triples. Duplicate ``(row, col)`` pairs raise."""
        nrows, ncols = (int(s) for s in shape)
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values)
        if not (rows.shape == cols.shape == values.shape) or rows.ndim != 1:
            raise ShapeError("rows, cols and values must be 1-D and equally long")
        if rows.size:
            if rows.min() < 0 or rows.max() >= nrows:
                raise ValueError("row index out of range")
            if cols.min() < 0 or cols.max() >= ncols:
                raise ValueError("column index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        if rows.size > 1:
            dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if np.any(dup):
                t = int(np.flatnonzero(dup)[0])
                raise ValueError(f"duplicate entry ({rows[t]}, {cols[t]})")
        indptr = np.zeros(nrows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=nrows), out=indptr[1:])
        return cls((nrows, ncols), indptr, cols, values, symmetric=symmetric)

    @classmethod
    def from_dense(cls, M, *, absent=0, symmetric=False):
        """Entries equal to ``absent`` are not stored."""
        M = np.asarray(M)
        if M.ndim != 2:
            raise ShapeError("dense matrix must be 2-D")
        mask = M != absent
        rows, cols = np.nonzero(mask)
        return cls.from_coo(M.shape, rows, cols, M[rows, cols], symmetric=symmetric)

    @classmethod
    def from_scipy(cls, S, *, symmetric=False):
        S = S.tocsr(copy=True)
        S.sort_indices()
        S.sum_duplicates()
        return cls(S.shape, S.indptr, S.indices, S.data, symmetric=symmetric)

    def to_scipy(self):
        import scipy.sparse as sp

        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def to_dense(self, absent=0):
        M = np.full(self.shape, absent, dtype=np.result_type(self.dtype, type(absent)))
        M[self.row_indices(), self.indices] = self.data
        return M

    def row_indices(self):
        """Row index of every stored entry (COO expansion)."""
        return np.repeat(np.arange(self.nrows, dtype=np.int64), np.diff(self.indptr))

    def entries(self):
        """Iterate ``(row, col, value)`` triples in storage order."""
        for r, c, v in zip(self.row_indices(), self.indices, self.data):
            yield int(r), int(c), v

    def with_values(self, data, *, symmetric=None):
        """Same sparsity pattern, new values (pattern arrays are shared)."""
        data = np.ascontiguousarray(data)
        if data.shape != self.indices.shape:
            raise ShapeError("value array does not match the pattern")
        sym = self.symmetric if symmetric is None else symmetric
        out = SparseMatrix(self.shape, self.indptr, self.indices, data,
                           symmetric=sym, check=False)
        return out

    def transpose(self):
        if self._transpose is None:
            if self.symmetric:
                self._transpose = self
            else:
                rows = self.row_indices()
                self._transpose = SparseMatrix.from_coo(
                    (self.ncols, self.nrows), self.indices, rows, self.data
                )
        return self._transpose

    def is_symmetric(self):
        """Exact (bitwise) structural and numerical symmetry."""
        if self.nrows != self.ncols:
            return False
        rows = self.row_indices()
        key = rows * self.ncols + self.indices
        tkey = self.indices * self.ncols + rows
        order = np.argsort(tkey, kind="stable")
        return bool(np.array_equal(key, tkey[order])
                    and np.array_equal(self.data, self.data[order]))


# ---------------------------------------------------------------------------
# compiled kernels


@njit(parallel=True, cache=True)
def _row_semiring_kernel(indptr, indices, data, v, add, mul, zero, out):
    for j in prange(out.shape[0]):
        acc = zero
        for t in range(indptr[j], indptr[j + 1]):
            acc = add(acc, mul(v[indices[t]], data[t]))
        out[j] = acc


@njit(parallel=True, cache=True)
def _ewise_kernel(u, v, op, out):
    for i in prange(u.shape[0]):
        out[i] = op(u[i], v[i])


@njit(parallel=True, cache=True)
def _apply_kernel(u, f, out):
    for i in prange(u.shape[0]):
        out[i] = f(u[i])


@njit(parallel=True, cache=True)
def _apply_arg_kernel(u, f, arg, out):
    for i in prange(u.shape[0]):
        out[i] = f(u[i], arg)


@njit(cache=True)
def _fold_kernel(u, op, identity):
    acc = identity
    for i in range(u.shape[0]):
        acc = op(acc, u[i])
    return acc


@njit(parallel=True, cache=True)
def _fill_kernel(u, s):
    for i in prange(u.shape[0]):
        u[i] = s


@njit(parallel=True, cache=True)
def _edge_kernel(indptr, indices, data, u, f, arg, out):
    for i in prange(indptr.shape[0] - 1):
        ui = u[i]
        for t in range(indptr[i], indptr[i + 1]):
            out[t] = f(data[t], ui, u[indices[t]], arg)


@njit(parallel=True, cache=True)
def _reduce_rows_kernel(indptr, data, op, identity, out):
    for i in prange(out.shape[0]):
        acc = identity
        for t in range(indptr[i], indptr[i + 1]):
            acc = op(acc, data[t])
        out[i] = acc


@njit(parallel=True, cache=True)
def _gram_kernel(X, Y, block, out):
    a, n = X.shape
    b = Y.shape[0]
    nblocks = (n + block - 1) // block
    partial = np.zeros((nblocks, a, b))
    for blk in prange(nblocks):
        lo = blk * block
        hi = min(n, lo + block)
        for i in range(a):
            for j in range(b):
                s = 0.0
                for t in range(lo, hi):
                    s += X[i, t] * Y[j, t]
                partial[blk, i, j] = s
    for i in range(a):
        for j in range(b):
            s = 0.0
            for blk in range(nblocks):
                s += partial[blk, i, j]
            out[i, j] = s


@njit(parallel=True, cache=True)
def _lincomb_kernel(C, X, out):
    a, b = C.shape
    n = X.shape[1]
    for t in prange(n):
        for i in range(a):
            s = 0.0
            for m in range(b):
                s += C[i, m] * X[m, t]
            out[i, t] = s


_higher_order = (_row_semiring_kernel, _ewise_kernel, _apply_kernel, _apply_arg_kernel,
                 _fold_kernel, _edge_kernel, _reduce_rows_kernel)
_uncached = {k: njit(parallel=k.targetoptions.get("parallel", False))(k.py_func)
             for k in _higher_order}


def _select(kernel, *ops):
    """Cached ``kernel`` for package operators, an uncached twin otherwise."""
    return kernel if all(_stable(f) for f in ops) else _uncached[kernel]


# ---------------------------------------------------------------------------
# public kernels


def _as_vector(u, name="vector"):
    u = np.asarray(u)
    if u.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {u.shape}")
    return np.ascontiguousarray(u)


def vxm(v, A, semiring=PLUS_TIMES, *, ctx=None):
    """Row vector times matrix: ``out[j] = add_i mul(v[i], A[i, j])``.

    The fold for each ``j`` is seeded with ``semiring.zero`` and visits
    ``i`` in ascending order; columns with no entries yield ``zero``.
    """
    v = _as_vector(v)
    if v.shape[0] != A.nrows:
        raise ShapeError(f"vector of length {v.shape[0]} incompatible with {A.shape} matrix")
    T = A.transpose()
    dtype = np.result_type(semiring.dtype, v.dtype, A.dtype)
    out = np.empty(A.ncols, dtype=dtype)
    zero = dtype.type(semiring.zero)
    add, mul = semiring.add.op, semiring.mul
    if _jitted(add, mul):
        _run(ctx, _select(_row_semiring_kernel, add, mul), T.indptr, T.indices, T.data,
             v.astype(dtype, copy=False), add, mul, zero, out)
    else:
        for j in range(A.ncols):
            acc = zero
            for t in range(T.indptr[j], T.indptr[j + 1]):
                acc = add(acc, mul(v[T.indices[t]], T.data[t]))
            out[j] = acc
    return out


def ewise_apply(u, v, op, *, dtype=None, ctx=None):
    """Elementwise ``out[i] = op(u[i], v[i])``."""
    u = _as_vector(u)
    v = _as_vector(v)
    if u.shape != v.shape:
        raise ShapeError(f"length mismatch: {u.shape[0]} vs {v.shape[0]}")
    dtype = np.result_type(u, v) if dtype is None else np.dtype(dtype)
    out = np.empty(u.shape[0], dtype=dtype)
    if _jitted(op):
        _run(ctx, _select(_ewise_kernel, op), u, v, op, out)
    else:
        for i in range(u.shape[0]):
            out[i] = op(u[i], v[i])
    return out


def apply(u, f, arg=None, *, dtype=None, ctx=None):
    """Elementwise ``out[i] = f(u[i])``, or ``f(u[i], arg)`` when ``arg`` is given."""
    u = _as_vector(u)
    out = np.empty(u.shape[0], dtype=u.dtype if dtype is None else dtype)
    if _jitted(f):
        if arg is None:
            _run(ctx, _select(_apply_kernel, f), u, f, out)
        else:
            _run(ctx, _select(_apply_arg_kernel, f), u, f, arg, out)
    else:
        for i in range(u.shape[0]):
            out[i] = f(u[i]) if arg is None else f(u[i], arg)
    return out


def fold(u, monoid=PLUS):
    """Left-to-right reduction of ``u`` under ``monoid``, seeded with its identity.

    Sequential by design: the order is part of the result.
    """
    u = _as_vector(u)
    identity = u.dtype.type(monoid.identity) if u.size else monoid.identity
    if _jitted(monoid.op):
        return _run(None, _select(_fold_kernel, monoid.op), u, monoid.op, identity)
    acc = identity
    for x in u:
        acc = monoid.op(acc, x)
    return acc


def fill(u, s, *, ctx=None):
    """Set every entry of ``u`` to ``s`` in place (GraphBLAS ``set``) and return it."""
    if u.ndim != 1 or not u.flags.c_contiguous:
        raise ShapeError("fill expects a contiguous 1-D vector")
    _run(ctx, _fill_kernel, u, u.dtype.type(s))
    return u


def apply_edges(A, u, f, arg=0.0, *, ctx=None):
    """New matrix on ``A``'s pattern with values ``f(a_ij, u[i], u[j], arg)``."""
    u = _as_vector(u)
    if A.nrows != A.ncols or u.shape[0] != A.nrows:
        raise ShapeError(f"vector of length {u.shape[0]} incompatible with {A.shape} matrix")
    out = np.empty(A.nnz, dtype=np.float64)
    if _jitted(f):
        _run(ctx, _select(_edge_kernel, f), A.indptr, A.indices, A.data, u, f, arg, out)
    else:
        rows = A.row_indices()
        for t in range(A.nnz):
            out[t] = f(A.data[t], u[rows[t]], u[A.indices[t]], arg)
    return A.with_values(out, symmetric=False)


def reduce_rows(A, monoid=PLUS, *, ctx=None):
    """``out[i]`` = fold of row ``i``'s stored values (ascending column order)."""
    out = np.empty(A.nrows, dtype=A.dtype)
    identity = A.dtype.type(monoid.identity)
    if _jitted(monoid.op):
        _run(ctx, _select(_reduce_rows_kernel, monoid.op), A.indptr, A.data, monoid.op, identity, out)
    else:
        for i in range(A.nrows):
            acc = identity
            for t in range(A.indptr[i], A.indptr[i + 1]):
                acc = monoid.op(acc, A.data[t])
            out[i] = acc
    return out


def gram(X, Y, *, ctx=None):
    """Matrix of inner products ``out[i, j] = <X[i], Y[j]>`` for row-stacked vectors.

    Each inner product is summed in fixed blocks of ``REDUCTION_BLOCK``
    entries which are then combined in block order.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[1] != Y.shape[1]:
        raise ShapeError(f"gram of incompatible shapes {X.shape} and {Y.shape}")
    out = np.empty((X.shape[0], Y.shape[0]))
    _run(ctx, _gram_kernel, X, Y, REDUCTION_BLOCK, out)
    return out


def dot(x, y, *, ctx=None):
    """Inner product with the same fixed-block summation as :func:`gram`.

    Accepts equally shaped arrays of any rank (Frobenius inner product).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"dot of incompatible shapes {x.shape} and {y.shape}")
    return float(gram(x.reshape(1, -1), y.reshape(1, -1), ctx=ctx)[0, 0])


def lincomb(C, X, *, ctx=None):
    """``C @ X`` for a small dense ``C`` and row-stacked vectors ``X``.

    Each output entry sums over ``C``'s columns in ascending order.
    """
    C = np.ascontiguousarray(C, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    if C.ndim != 2 or X.ndim != 2 or C.shape[1] != X.shape[0]:
        raise ShapeError(f"lincomb of incompatible shapes {C.shape} and {X.shape}")
    out = np.empty((C.shape[0], X.shape[1]))
    _run(ctx, _lincomb_kernel, C, X, out)
    return out
