"""Graph p-Laplacian objective, gradient and Hessian-vector operator.

An embedding ``U`` is stored row-wise: ``U[l]`` is the l-th length-n vector.
For each vector the objective term is ``A(u) / B(u)`` with

    A(u) = 1/2 * sum_ij w_ij |u_i - u_j|^p        B(u) = sum_i |u_i|^p

and the objective is the sum of the terms. All heavy work is expressed with
the kernels of :mod:`pspectral.algebra`.
"""

from dataclasses import dataclass
import hashlib

import numpy as np
from numba import njit

from . import algebra as alg
from .errors import DegenerateEmbeddingError, DomainError, ShapeError, StaleHessianError

__all__ = [
    "phi_p", "p_laplacian_apply", "objective", "euc_grad", "HessianParts",
    "build_hessian_parts", "euc_hessian_eta", "DEFAULT_EPS",
]

DEFAULT_EPS = 1e-9
HESSIAN_MODES = ("sparse", "full")


def check_p(p):
    if not 1.0 < p <= 2.0:
        raise DomainError(f"p must lie in (1, 2], got {p!r}")


@njit(cache=True)
def _phi(x, p):
    if x > 0.0:
        return x ** (p - 1.0)
    if x < 0.0:
        return -((-x) ** (p - 1.0))
    return 0.0


@njit(cache=True)
def _abs_pow(x, p):
    return abs(x) ** p


@njit(cache=True)
def _capped_pow(x, pe):
    # max(|x|, eps)^(p - 2)
    p, eps = pe
    return max(abs(x), eps) ** (p - 2.0)


@njit(cache=True)
def _edge_abs_pow(w, ui, uj, p):
    return w * abs(ui - uj) ** p


@njit(cache=True)
def _edge_phi(w, ui, uj, p):
    return w * _phi(ui - uj, p)


@njit(cache=True)
def _edge_curvature(w, ui, uj, args):
    p, eps, scale = args
    return scale * w * max(abs(ui - uj), eps) ** (p - 2.0)


def phi_p(x, p):
    """Signed power ``|x|^(p-1) * sign(x)``; scalar or array input."""
    check_p(p)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        return float(_phi(float(x), float(p)))
    return alg.apply(np.ravel(x), _phi, float(p)).reshape(x.shape)


def _rows(U, n):
    U = np.asarray(U, dtype=np.float64)
    if U.ndim == 1:
        U = U[None, :]
    if U.ndim != 2 or U.shape[1] != n:
        raise ShapeError(f"embedding of shape {U.shape} does not match n={n}")
    return np.ascontiguousarray(U)


def p_laplacian_apply(g, u, p, *, ctx=None):
    """``(Delta_p u)_i = sum_j w_ij phi_p(u_i - u_j)``."""
    check_p(p)
    u = np.ascontiguousarray(u, dtype=np.float64)
    if u.shape != (g.n,):
        raise ShapeError(f"vector of length {u.shape} does not match n={g.n}")
    E = alg.apply_edges(g.adjacency, u, _edge_phi, float(p), ctx=ctx)
    return alg.reduce_rows(E, alg.PLUS, ctx=ctx)


def _numerator(g, u, p, ctx):
    E = alg.apply_edges(g.adjacency, u, _edge_abs_pow, float(p), ctx=ctx)
    return 0.5 * alg.fold(alg.reduce_rows(E, alg.PLUS, ctx=ctx), alg.PLUS)


def _denominator(u, p, ctx):
    return alg.fold(alg.apply(u, _abs_pow, float(p), ctx=ctx), alg.PLUS)


def _terms(g, U, p, ctx):
    A = np.empty(U.shape[0])
    B = np.empty(U.shape[0])
    for l, u in enumerate(U):
        B[l] = _denominator(u, p, ctx)
        if not B[l] > 0:
            raise DegenerateEmbeddingError(f"embedding vector {l} is zero")
        A[l] = _numerator(g, u, p, ctx)
    return A, B


def objective(g, U, p, *, ctx=None, return_terms=False):
    """Sum over vectors of ``A(u) / B(u)``.

    With ``return_terms`` also returns the per-vector ratios.
    """
    check_p(p)
    U = _rows(U, g.n)
    A, B = _terms(g, U, p, ctx)
    terms = A / B
    F = alg.fold(terms, alg.PLUS)
    return (F, terms) if return_terms else F


def euc_grad(g, U, p, *, ctx=None):
    """Euclidean gradient, one row per embedding vector.

    ``grad_l = (p / B_l) * (Delta_p u_l - (A_l / B_l) * phi_p(u_l))``.
    """
    check_p(p)
    U = _rows(U, g.n)
    A, B = _terms(g, U, p, ctx)
    G = np.empty_like(U)
    for l, u in enumerate(U):
        lap = p_laplacian_apply(g, u, p, ctx=ctx)
        phi = alg.apply(u, _phi, float(p), ctx=ctx)
        G[l] = (p / B[l]) * (lap - (A[l] / B[l]) * phi)
    return G


def fingerprint(U, p):
    h = hashlib.blake2b(digest_size=16)
    h.update(np.ascontiguousarray(U, dtype=np.float64).tobytes())
    h.update(np.float64(p).tobytes())
    return h.hexdigest()


@dataclass
class HessianParts:
    """Per-vector curvature data, rebuilt once per outer Newton iteration.

    ``D[l]`` is the diagonal of the l-th Hessian block and ``Hoff[l]`` its
    negated off-diagonal part, so that ``H_l eta = D[l] * eta - eta Hoff[l]``.
    In ``full`` mode ``gA``/``gB`` hold the numerator/denominator gradients
    used by the rank-two quotient correction.
    """

    D: np.ndarray
    Hoff: list
    A: np.ndarray
    B: np.ndarray
    gA: np.ndarray | None
    gB: np.ndarray | None
    mode: str
    p: float
    eps: float
    fingerprint: str

    @property
    def k(self):
        return self.D.shape[0]

    @property
    def n(self):
        return self.D.shape[1]

    def check_current(self, U, p=None):
        """Raise :class:`StaleHessianError` unless built for ``(U, p)``."""
        p = self.p if p is None else p
        if fingerprint(U, p) != self.fingerprint:
            raise StaleHessianError("Hessian parts are stale for this embedding")


def build_hessian_parts(g, U, p, eps=DEFAULT_EPS, *, mode="sparse", ctx=None):
    """Assemble :class:`HessianParts` at ``U``.

    The ``|.|^(p-2)`` factors are evaluated as ``max(|.|, eps)^(p-2)``; this
    is the only place the cap enters.
    """
    check_p(p)
    if not eps > 0:
        raise DomainError("eps must be positive")
    if mode not in HESSIAN_MODES:
        raise DomainError(f"mode must be one of {HESSIAN_MODES}")
    U = _rows(U, g.n)
    A, B = _terms(g, U, p, ctx)
    c = p * (p - 1.0)
    k, n = U.shape
    D = np.empty((k, n))
    Hoff = []
    for l, u in enumerate(U):
        # off-diagonal of Hess(A)/B is -c * w_ij cap^(p-2) / B; Hoff stores its negation
        off = alg.apply_edges(g.adjacency, u, _edge_curvature, (float(p), float(eps), c / B[l]),
                              ctx=ctx)
        off.symmetric = True
        rowsum = alg.reduce_rows(off, alg.PLUS, ctx=ctx)
        curv_b = alg.apply(u, _capped_pow, (float(p), float(eps)), ctx=ctx)
        D[l] = rowsum - (c * A[l] / B[l] ** 2) * curv_b
        Hoff.append(off)
    gA = gB = None
    if mode == "full":
        gA = np.empty((k, n))
        gB = np.empty((k, n))
        for l, u in enumerate(U):
            gA[l] = p * p_laplacian_apply(g, u, p, ctx=ctx)
            gB[l] = p * alg.apply(u, _phi, float(p), ctx=ctx)
    return HessianParts(D=D, Hoff=Hoff, A=A, B=B, gA=gA, gB=gB, mode=mode,
                        p=float(p), eps=float(eps), fingerprint=fingerprint(U, p))


def euc_hessian_eta(parts, eta, *, U=None, ctx=None):
    """Apply the block-diagonal Euclidean Hessian: ``r[l] = H_l eta[l]``.

    Sparse part per vector: ``eta * D - vxm(eta, Hoff)``. ``full`` mode adds

        -(gA <gB, eta> + gB <gA, eta>) / B^2 + 2 A gB <gB, eta> / B^3.

    Passing ``U`` verifies that the parts were built for it.
    """
    if U is not None:
        parts.check_current(U)
    eta = np.asarray(eta, dtype=np.float64)
    if eta.ndim == 1:
        eta = eta[None, :]
    if eta.shape != parts.D.shape:
        raise ShapeError(f"eta of shape {eta.shape} does not match parts {parts.D.shape}")
    r = np.empty_like(eta)
    for l in range(parts.k):
        e = np.ascontiguousarray(eta[l])
        v = alg.vxm(e, parts.Hoff[l], alg.PLUS_TIMES, ctx=ctx)
        w = alg.ewise_apply(e, parts.D[l], alg.times, ctx=ctx)
        r[l] = alg.ewise_apply(w, v, alg.minus, ctx=ctx)
        if parts.mode == "full":
            gA, gB = parts.gA[l], parts.gB[l]
            a_eta = alg.dot(gA, e, ctx=ctx)
            b_eta = alg.dot(gB, e, ctx=ctx)
            A, B = parts.A[l], parts.B[l]
            r[l] -= (b_eta / B**2) * gA
            r[l] -= (a_eta / B**2) * gB
            r[l] += (2.0 * A * b_eta / B**3) * gB
    return r
