"""k-means discretization and cut-based partition metrics."""

from dataclasses import dataclass
import itertools
import os

import numpy as np

from .errors import ClusteringError, ConfigError, OutputError, ShapeError

__all__ = [
    "ClusterAssignment", "KMeansConfig", "kmeans", "cut", "rcut",
    "confusion_accuracy",
]


class ClusterAssignment:
    """Cluster id in ``1..k`` for every node."""

    def __init__(self, labels, k=None):
        labels = np.asarray(labels, dtype=np.int64)
        if labels.ndim != 1:
            raise ShapeError("labels must be 1-D")
        if k is None:
            k = int(labels.max()) if labels.size else 0
        self.labels = labels
        self.k = int(k)
        if labels.size and (labels.min() < 1 or labels.max() > self.k):
            raise ClusteringError(f"labels must lie in 1..{self.k}")

    @property
    def n(self):
        return self.labels.shape[0]

    def sizes(self):
        return np.bincount(self.labels, minlength=self.k + 1)[1:]

    def clusters(self):
        """Node index array of each cluster, in label order."""
        order = np.argsort(self.labels, kind="stable")
        bounds = np.cumsum(self.sizes())[:-1]
        return np.split(order, bounds)

    def __eq__(self, other):
        if not isinstance(other, ClusterAssignment):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.labels, other.labels)

    __hash__ = None

    def __repr__(self):
        return f"ClusterAssignment(n={self.n}, k={self.k}, sizes={self.sizes().tolist()})"

    def to_text(self):
        """``<node_id> <cluster_id>`` per line, 0-based nodes, 1-based clusters."""
        return "".join(f"{i} {c}\n" for i, c in enumerate(self.labels.tolist()))

    def write(self, path):
        try:
            with open(path, "w") as fh:
                fh.write(self.to_text())
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc}") from None

    @classmethod
    def read(cls, path, k=None):
        data = np.loadtxt(path, dtype=np.int64, ndmin=2)
        labels = np.empty(data.shape[0], dtype=np.int64)
        labels[data[:, 0]] = data[:, 1]
        return cls(labels, k)


@dataclass(frozen=True)
class KMeansConfig:
    restarts: int = 10
    max_iters: int = 300
    rel_tol: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1 or self.max_iters < 1:
            raise ConfigError("restarts and max_iters must be >= 1")
        if self.rel_tol < 0:
            raise ConfigError("rel_tol must be nonnegative")


def _sq_dists(X, C):
    D = np.empty((X.shape[0], C.shape[0]))
    for c in range(C.shape[0]):
        diff = X - C[c]
        D[:, c] = (diff * diff).sum(axis=1)
    return D


def _centroids(X, labels, k):
    counts = np.bincount(labels, minlength=k)
    C = np.empty((k, X.shape[1]))
    for d in range(X.shape[1]):
        C[:, d] = np.bincount(labels, weights=X[:, d], minlength=k)
    nonempty = counts > 0
    C[nonempty] /= counts[nonempty, None]
    return C, counts


def _assign(X, C):
    """Nearest centroid with ties to the lowest index; repairs empty clusters.

    Repair: the point farthest from its centroid (taken from a cluster with
    more than one member) becomes the empty cluster's centroid and member.
    """
    D = _sq_dists(X, C)
    labels = np.argmin(D, axis=1)
    k = C.shape[0]
    counts = np.bincount(labels, minlength=k)
    repaired = False
    for c in np.flatnonzero(counts == 0):
        own = D[np.arange(X.shape[0]), labels]
        own = np.where(counts[labels] > 1, own, -np.inf)
        idx = int(np.argmax(own))
        counts[labels[idx]] -= 1
        labels[idx] = c
        counts[c] = 1
        C[c] = X[idx]
        # keep the distance table current for later repairs
        diff = X - C[c]
        D[:, c] = (diff * diff).sum(axis=1)
        repaired = True
    return labels, repaired


def _sse(X, labels, C):
    diff = X - C[labels]
    return float((diff * diff).sum())


def _kmeanspp(X, k, rng):
    n = X.shape[0]
    C = np.empty((k, X.shape[1]))
    C[0] = X[rng.integers(n)]
    closest = _sq_dists(X, C[:1])[:, 0]
    for c in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        C[c] = X[idx]
        diff = X - C[c]
        closest = np.minimum(closest, (diff * diff).sum(axis=1))
    return C


def _lloyd(X, k, cfg, rng):
    C = _kmeanspp(X, k, rng)
    labels, _ = _assign(X, C)
    sse = _sse(X, labels, C)
    for _ in range(cfg.max_iters):
        C, _ = _centroids(X, labels, k)
        new_labels, _ = _assign(X, C)
        new_sse = _sse(X, new_labels, C)
        if new_sse > sse * (1 + 1e-12) + 1e-300:
            raise ClusteringError(f"Lloyd step increased SSE ({sse!r} -> {new_sse!r})")
        done = np.array_equal(new_labels, labels) or (sse - new_sse) <= cfg.rel_tol * sse
        labels, sse = new_labels, new_sse
        if done:
            break
    C, _ = _centroids(X, labels, k)
    return labels, _sse(X, labels, C), C


def kmeans(points, k, cfg=None, *, return_centroids=False):
    """Seeded k-means++ with Lloyd iterations; best of ``cfg.restarts``.

    Restart ``r`` draws from ``default_rng([cfg.seed, r])``. Returns
    ``(ClusterAssignment, sse)`` and the centroids when requested.
    """
    cfg = KMeansConfig() if cfg is None else cfg
    X = np.ascontiguousarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if k < 1 or n < k:
        raise ClusteringError(f"need 1 <= k <= n, got k={k}, n={n}")
    best = None
    for r in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, r])
        labels, sse, C = _lloyd(X, k, cfg, rng)
        if best is None or sse < best[1]:
            best = (labels, sse, C)
    labels, sse, C = best
    a = ClusterAssignment(labels + 1, k)
    return (a, sse, C) if return_centroids else (a, sse)


# ---------------------------------------------------------------------------
# metrics


def _subset_mask(n, S):
    S = np.asarray(S)
    if S.dtype == bool:
        if S.shape != (n,):
            raise ShapeError("boolean subset mask must have length n")
        mask = S.copy()
    else:
        mask = np.zeros(n, dtype=bool)
        mask[S.astype(np.int64)] = True
    if not mask.any() or mask.all():
        raise ClusteringError("subset must be nonempty and proper")
    return mask


def cut(g, S):
    """Total weight of edges with exactly one endpoint in ``S``.

    ``S`` is an array of node indices or a boolean mask.
    """
    A = g.adjacency
    mask = _subset_mask(g.n, S)
    rows = A.row_indices()
    crossing = mask[rows] & ~mask[A.indices]
    return float(A.data[crossing].sum())


def rcut(g, a):
    """Ratio cut ``sum_i cut(C_i, complement) / |C_i|``."""
    if a.n != g.n:
        raise ShapeError("assignment does not cover the graph")
    sizes = a.sizes()
    if np.any(sizes == 0):
        empty = (np.flatnonzero(sizes == 0) + 1).tolist()
        raise ClusteringError(f"empty cluster(s) {empty}")
    A = g.adjacency
    rows = A.row_indices()
    lab = a.labels - 1
    crossing = lab[rows] != lab[A.indices]
    cuts = np.bincount(lab[rows][crossing], weights=A.data[crossing], minlength=a.k)
    return float((cuts / sizes).sum())


def confusion_accuracy(a, truth):
    """Best fraction of agreeing labels over all matchings of cluster ids."""
    if a.n != truth.n:
        raise ShapeError("assignments differ in size")
    k = max(a.k, truth.k)
    M = np.zeros((k, k), dtype=np.int64)
    np.add.at(M, (a.labels - 1, truth.labels - 1), 1)
    if k <= 8:
        best = max(M[np.arange(k), list(perm)].sum()
                   for perm in itertools.permutations(range(k)))
    else:
        from scipy.optimize import linear_sum_assignment

        r, c = linear_sum_assignment(-M)
        best = M[r, c].sum()
    return float(best) / a.n
