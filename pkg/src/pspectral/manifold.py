"""Riemannian trust-region Newton on the Grassmann manifold.

Points are stored as k x n arrays with orthonormal rows (the transpose of
the usual n x k representative). Tangent vectors are horizontal:
``U @ xi.T == 0``. The retraction is the Q factor of a thin QR with positive
R diagonal, computed as two rounds of Cholesky-QR so that every reduction
goes through the deterministic kernels of :mod:`pspectral.algebra`.
"""

from dataclasses import asdict, dataclass, field, replace
import csv
import io
import json
import math
import time

import numpy as np

from . import algebra as alg
from . import plap
from .errors import ConfigError, ContractViolation, PSpectralError, SolverError

__all__ = [
    "SolverConfig", "ContinuationSchedule", "SolveTrace", "IterRecord",
    "project_tangent", "retract", "truncated_cg", "trust_region_newton",
    "init_p2", "continuation_solve", "orthonormality_error", "qf",
]

ORTHO_TOL = 1e-10
TRACE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SolverConfig:
    """Trust-region and truncated-CG settings.

    ``None`` entries are resolved against the problem size by
    :meth:`resolved`: ``grad_tol = 1e-6 * sqrt(n k)``,
    ``tcg_max_iters = 2 n k``, ``tr_delta_max = sqrt(k)`` and
    ``tr_delta0 = tr_delta_max / 8``.
    """

    grad_tol: float | None = None
    max_outer: int = 200
    tr_delta0: float | None = None
    tr_delta_max: float | None = None
    tr_rho_accept: float = 0.1
    tcg_kappa: float = 0.1
    tcg_theta: float = 1.0
    tcg_max_iters: int | None = None
    hessian_mode: str = "sparse"
    eps: float = plap.DEFAULT_EPS
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.tr_rho_accept < 0.25:
            raise ConfigError("tr_rho_accept must lie in (0, 0.25)")
        if self.grad_tol is not None and not self.grad_tol > 0:
            raise ConfigError("grad_tol must be positive")
        if self.max_outer < 0:
            raise ConfigError("max_outer must be >= 0")
        if (self.tr_delta0 is not None and self.tr_delta_max is not None
                and not 0 < self.tr_delta0 <= self.tr_delta_max):
            raise ConfigError("need 0 < tr_delta0 <= tr_delta_max")
        if self.hessian_mode not in plap.HESSIAN_MODES:
            raise ConfigError(f"hessian_mode must be one of {plap.HESSIAN_MODES}")
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if not (self.tcg_kappa > 0 and self.tcg_theta > 0):
            raise ConfigError("tcg_kappa and tcg_theta must be positive")

    def resolved(self, n, k):
        delta_max = math.sqrt(k) if self.tr_delta_max is None else self.tr_delta_max
        delta0 = delta_max / 8 if self.tr_delta0 is None else self.tr_delta0
        return replace(
            self,
            grad_tol=1e-6 * math.sqrt(n * k) if self.grad_tol is None else self.grad_tol,
            tcg_max_iters=2 * n * k if self.tcg_max_iters is None else self.tcg_max_iters,
            tr_delta_max=delta_max,
            tr_delta0=min(delta0, delta_max),
        )


@dataclass(frozen=True)
class ContinuationSchedule:
    """``p_0 = p_start``, ``p_{j+1} = max(p_final, factor * p_j)``."""

    p_final: float = 2.0
    factor: float = 0.9
    p_start: float = 2.0

    def __post_init__(self):
        plap.check_p(self.p_final)
        plap.check_p(self.p_start)
        if not 0 < self.factor < 1:
            raise ConfigError("factor must lie in (0, 1)")
        if self.p_final > self.p_start:
            raise ConfigError("p_final must not exceed p_start")

    def sequence(self):
        ps = [self.p_start]
        while ps[-1] > self.p_final:
            ps.append(max(self.p_final, self.factor * ps[-1]))
        return ps


@dataclass
class IterRecord:
    p: float
    iter: int
    F: float
    gradnorm: float
    delta: float
    tcg_iters: int
    tcg_status: str
    accepted: bool
    millis: float


TRACE_FIELDS = ("p", "iter", "F", "gradnorm", "delta", "tcg_iters", "tcg_status",
                "accepted", "millis")


@dataclass
class SolveTrace:
    """Iteration log of one or more trust-region stages."""

    records: list = field(default_factory=list)
    stage_seconds: dict = field(default_factory=dict)
    stage_status: dict = field(default_factory=dict)

    def extend(self, other):
        self.records.extend(other.records)
        self.stage_seconds.update(other.stage_seconds)
        self.stage_status.update(other.stage_status)

    def stage(self, p):
        return [r for r in self.records if r.p == p]

    def to_csv(self, stream=None):
        """Line-per-iteration CSV; returns the text when ``stream`` is None."""
        out = io.StringIO() if stream is None else stream
        out.write(f"# schema_version={TRACE_SCHEMA_VERSION}\n")
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(TRACE_FIELDS)
        for r in self.records:
            writer.writerow([repr(r.p), r.iter, repr(r.F), repr(r.gradnorm), repr(r.delta),
                             r.tcg_iters, r.tcg_status, int(r.accepted), f"{r.millis:.3f}"])
        return out.getvalue() if stream is None else None

    def summary(self):
        stages = []
        for p, secs in self.stage_seconds.items():
            recs = self.stage(p)
            last = recs[-1] if recs else None
            stages.append({
                "p": p,
                "iterations": len(recs) - 1 if recs else 0,
                "F": last.F if last else None,
                "gradnorm": last.gradnorm if last else None,
                "status": self.stage_status.get(p),
                "seconds": secs,
            })
        return {"schema_version": TRACE_SCHEMA_VERSION, "stages": stages}

    def to_json(self):
        return json.dumps(self.summary(), indent=2)

    @classmethod
    def from_csv(cls, text):
        rows = [line for line in text.splitlines() if not line.startswith("#")]
        reader = csv.DictReader(rows)
        tr = cls()
        for row in reader:
            tr.records.append(IterRecord(
                p=float(row["p"]), iter=int(row["iter"]), F=float(row["F"]),
                gradnorm=float(row["gradnorm"]), delta=float(row["delta"]),
                tcg_iters=int(row["tcg_iters"]), tcg_status=row["tcg_status"],
                accepted=bool(int(row["accepted"])), millis=float(row["millis"])))
        return tr


# ---------------------------------------------------------------------------
# geometry


def _rows(U):
    U = np.ascontiguousarray(U, dtype=np.float64)
    if U.ndim != 2:
        raise ContractViolation("embedding must be a 2-D (k, n) array")
    return U


def orthonormality_error(U, *, ctx=None):
    """``max |U U^T - I|``."""
    U = _rows(U)
    G = alg.gram(U, U, ctx=ctx)
    return float(np.abs(G - np.eye(U.shape[0])).max())


def _require_orthonormal(U, ctx):
    err = orthonormality_error(U, ctx=ctx)
    if not err <= ORTHO_TOL:
        raise ContractViolation(f"embedding is not orthonormal (error {err:.3e})")


def project_tangent(U, G, *, ctx=None, check=True):
    """Horizontal projection ``G - (G U^T) U`` (row layout of ``G - U U^T G``)."""
    U = _rows(U)
    G = np.ascontiguousarray(G, dtype=np.float64)
    if G.shape != U.shape:
        raise ContractViolation(f"tangent of shape {G.shape} does not match {U.shape}")
    if check:
        _require_orthonormal(U, ctx)
    C = alg.gram(G, U, ctx=ctx)
    return G - alg.lincomb(C, U, ctx=ctx)


def _cholqr(Y, ctx):
    M = alg.gram(Y, Y, ctx=ctx)
    L = np.linalg.cholesky(M)
    Linv = np.linalg.inv(L)
    return alg.lincomb(Linv, Y, ctx=ctx)


def qf(Y, *, ctx=None):
    """Orthonormal rows spanning ``Y``'s row space, with positive R diagonal.

    Raises ``numpy.linalg.LinAlgError`` when ``Y`` is (numerically) rank
    deficient.
    """
    Y = _rows(Y)
    if not np.all(np.isfinite(Y)):
        raise np.linalg.LinAlgError("non-finite input")
    if (alg.gram(Y, Y, ctx=ctx).diagonal() <= 0).any():
        raise np.linalg.LinAlgError("zero row")
    Q = _cholqr(Y, ctx)
    Q = _cholqr(Q, ctx)
    if not np.all(np.isfinite(Q)) or orthonormality_error(Q, ctx=ctx) > ORTHO_TOL:
        raise np.linalg.LinAlgError("rank deficient")
    return Q


def retract(U, xi, *, ctx=None, check=True):
    """QR retraction ``qf(U + xi)``."""
    U = _rows(U)
    if check:
        _require_orthonormal(U, ctx)
    return qf(U + xi, ctx=ctx)


def init_p2(g, k, seed, *, ctx=None):
    """Orthonormalized seeded Gaussian n x k sample (returned as k x n)."""
    n = g if isinstance(g, (int, np.integer)) else g.n
    if not 1 <= k < n:
        raise ConfigError(f"need 1 <= k < n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, k))
    return qf(np.ascontiguousarray(X.T), ctx=ctx)


# ---------------------------------------------------------------------------
# truncated CG


TCG_INTERIOR = "interior"
TCG_NEGATIVE_CURVATURE = "negative-curvature"
TCG_BOUNDARY = "boundary"
TCG_MAX_ITERS = "max-iters"
TCG_MODEL_INCREASED = "model-increased"


@dataclass
class TCGResult:
    step: np.ndarray
    Hstep: np.ndarray
    status: str
    iters: int
    model_decrease: float


def _boundary_tau(s_s, s_d, d_d, delta):
    disc = s_d * s_d + d_d * (delta * delta - s_s)
    return (-s_d + math.sqrt(max(disc, 0.0))) / d_d


def truncated_cg(hess_op, grad, delta, cfg, *, inner=None):
    """Steihaug-Toint CG for ``min <g, s> + 1/2 <s, H s>, ||s|| <= delta``.

    ``hess_op`` must be symmetric with respect to ``inner`` (default: the
    Frobenius inner product). Stops on the residual test
    ``||r|| <= ||g|| min(kappa, ||g||^theta)`` (``interior``), on negative
    curvature or the boundary (step placed on the boundary), or after
    ``cfg.tcg_max_iters`` iterations. The returned step never has a
    negative model decrease.
    """
    ip = inner if inner is not None else (lambda a, b: float(np.vdot(a, b)))
    if not delta > 0:
        raise ConfigError("trust radius must be positive")
    max_iters = cfg.tcg_max_iters if cfg.tcg_max_iters is not None else 2 * grad.size
    s = np.zeros_like(grad)
    Hs = np.zeros_like(grad)
    r = grad.copy()
    rr = ip(r, r)
    norm_g = math.sqrt(rr)
    if norm_g == 0.0:
        return TCGResult(s, Hs, TCG_INTERIOR, 0, 0.0)
    target = norm_g * min(cfg.tcg_kappa, norm_g ** cfg.tcg_theta)
    d = -r
    s_s = 0.0
    model = 0.0
    status = TCG_MAX_ITERS
    j = 0
    while j < max_iters:
        j += 1
        Hd = hess_op(d)
        dHd = ip(d, Hd)
        s_d = ip(s, d)
        d_d = ip(d, d)
        if d_d == 0.0:
            status = TCG_INTERIOR
            break
        alpha = rr / dHd if dHd != 0 else math.inf
        s_s_new = s_s + 2 * alpha * s_d + alpha * alpha * d_d
        if dHd <= 0 or s_s_new >= delta * delta:
            tau = _boundary_tau(s_s, s_d, d_d, delta)
            s_b = s + tau * d
            Hs_b = Hs + tau * Hd
            model_b = ip(grad, s_b) + 0.5 * ip(s_b, Hs_b)
            if model_b <= model:
                s, Hs, model = s_b, Hs_b, model_b
                status = TCG_NEGATIVE_CURVATURE if dHd <= 0 else TCG_BOUNDARY
            else:
                status = TCG_MODEL_INCREASED
            break
        s_new = s + alpha * d
        Hs_new = Hs + alpha * Hd
        model_new = ip(grad, s_new) + 0.5 * ip(s_new, Hs_new)
        if model_new > model:
            status = TCG_MODEL_INCREASED
            break
        s, Hs, model, s_s = s_new, Hs_new, model_new, s_s_new
        r = r + alpha * Hd
        rr_new = ip(r, r)
        if math.sqrt(rr_new) <= target:
            status = TCG_INTERIOR
            break
        beta = rr_new / rr
        rr = rr_new
        d = -r + beta * d
    return TCGResult(s, Hs, status, j, -model)


# ---------------------------------------------------------------------------
# trust-region Newton


class _Problem:
    """Objective, Riemannian gradient and Hessian at a point, sharing work."""

    def __init__(self, g, p, cfg, ctx):
        self.g, self.p, self.cfg, self.ctx = g, p, cfg, ctx

    def inner(self, a, b):
        return alg.dot(a, b, ctx=self.ctx)

    def value(self, U):
        F = plap.objective(self.g, U, self.p, ctx=self.ctx)
        if not math.isfinite(F):
            raise FloatingPointError("non-finite objective")
        return F

    def gradient(self, U):
        G = plap.euc_grad(self.g, U, self.p, ctx=self.ctx)
        if not np.all(np.isfinite(G)):
            raise FloatingPointError("non-finite gradient")
        return G, project_tangent(U, G, ctx=self.ctx, check=False)

    def hessian(self, U, G):
        parts = plap.build_hessian_parts(self.g, U, self.p, self.cfg.eps,
                                         mode=self.cfg.hessian_mode, ctx=self.ctx)
        # curvature of the quotient geometry: -xi (U^T G); only the symmetric
        # part is kept so that the operator stays self-adjoint for CG
        C = alg.gram(G, U, ctx=self.ctx)
        C = 0.5 * (C + C.T)
        ctx = self.ctx

        def op(xi):
            H = plap.euc_hessian_eta(parts, xi, ctx=ctx)
            return project_tangent(U, H, ctx=ctx, check=False) - alg.lincomb(C, xi, ctx=ctx)

        return op


def trust_region_newton(g, p, U0, cfg=None, *, ctx=None, trace=None):
    """Minimize the p-Laplacian objective over the Grassmann manifold from ``U0``.

    Returns ``(U, trace)``; ``trace`` gains one record per outer iteration
    plus an initial record with ``iter = 0``.
    """
    plap.check_p(p)
    U = _rows(U0).copy()
    k, n = U.shape
    cfg = (SolverConfig() if cfg is None else cfg).resolved(n, k)
    _require_orthonormal(U, ctx)
    trace = SolveTrace() if trace is None else trace
    prob = _Problem(g, p, cfg, ctx)
    t_stage = time.perf_counter()
    delta = cfg.tr_delta0
    min_delta = 1e-14 * cfg.tr_delta_max
    status = "max-outer"

    def fail(msg, exc=None):
        trace.stage_seconds[p] = time.perf_counter() - t_stage
        trace.stage_status[p] = "error"
        err = SolverError(msg, trace=trace, p=p)
        raise err from exc

    try:
        F = prob.value(U)
        G, rgrad = prob.gradient(U)
    except (FloatingPointError, PSpectralError) as exc:
        fail(f"cannot evaluate objective at the starting point: {exc}", exc)
    gnorm = math.sqrt(prob.inner(rgrad, rgrad))
    trace.records.append(IterRecord(p, 0, F, gnorm, delta, 0, "", True, 0.0))

    for it in range(1, cfg.max_outer + 1):
        if gnorm <= cfg.grad_tol:
            status = "converged"
            break
        if delta < min_delta:
            status = "stalled"
            break
        t0 = time.perf_counter()
        hess = prob.hessian(U, G)
        res = truncated_cg(hess, rgrad, delta, cfg, inner=prob.inner)
        if res.model_decrease < 0:
            fail(f"tCG returned a model increase {res.model_decrease!r}")
        accepted = False
        rho = -math.inf
        U_new = None
        if res.model_decrease > 0:
            try:
                U_new = retract(U, res.step, ctx=ctx, check=False)
                F_new = prob.value(U_new)
            except (np.linalg.LinAlgError, FloatingPointError, PSpectralError):
                U_new = None
        if U_new is not None:
            reg = max(1.0, abs(F)) * np.finfo(float).eps * 1e3
            rho = (F - F_new + reg) / (res.model_decrease + reg)
            accepted = rho > cfg.tr_rho_accept and F_new < F
        step_norm = math.sqrt(prob.inner(res.step, res.step))
        if rho < 0.25 or not accepted:
            delta = 0.5 * delta
        elif rho > 0.75 and step_norm >= 0.99 * delta:
            delta = min(2.0 * delta, cfg.tr_delta_max)
        if accepted:
            ortho = orthonormality_error(U_new, ctx=ctx)
            if ortho > ORTHO_TOL:
                fail(f"iterate lost orthonormality ({ortho:.3e})")
            U, F = U_new, F_new
            try:
                G, rgrad = prob.gradient(U)
            except (FloatingPointError, PSpectralError) as exc:
                fail(f"gradient evaluation failed: {exc}", exc)
            gnorm = math.sqrt(prob.inner(rgrad, rgrad))
        millis = 1e3 * (time.perf_counter() - t0)
        trace.records.append(IterRecord(p, it, F, gnorm, delta, res.iters, res.status,
                                        accepted, millis))
    else:
        if gnorm <= cfg.grad_tol:
            status = "converged"
    trace.stage_seconds[p] = time.perf_counter() - t_stage
    trace.stage_status[p] = status
    return U, trace


def continuation_solve(g, k, schedule=None, cfg=None, *, ctx=None, U0=None, stages=None):
    """Solve at p = 2 from :func:`init_p2`, then warm-start down the schedule.

    Between stages the embedding is re-orthonormalized. When ``stages`` is a
    list it receives ``(p, U)`` for every stage.
    """
    schedule = ContinuationSchedule() if schedule is None else schedule
    cfg = SolverConfig() if cfg is None else cfg
    U = init_p2(g, k, cfg.seed, ctx=ctx) if U0 is None else _rows(U0)
    trace = SolveTrace()
    for j, p in enumerate(schedule.sequence()):
        if j > 0:
            try:
                U = qf(U, ctx=ctx)
            except np.linalg.LinAlgError as exc:
                raise SolverError(f"re-orthonormalization failed: {exc}", trace=trace,
                                  p=p) from exc
        U, _ = trust_region_newton(g, p, U, cfg, ctx=ctx, trace=trace)
        if stages is not None:
            stages.append((p, U))
    return U, trace


def config_dict(cfg):
    return asdict(cfg)
