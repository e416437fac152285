import math

import numpy as np
import pytest

from pspectral import plap
from pspectral.errors import ConfigError, ContractViolation, DomainError, SolverError
from pspectral.graph_io import Graph, SyntheticSpec, generate_synthetic
from pspectral.manifold import (
    ContinuationSchedule, SolverConfig, SolveTrace, TCG_BOUNDARY, TCG_INTERIOR,
    TCG_NEGATIVE_CURVATURE, continuation_solve, init_p2, orthonormality_error,
    project_tangent, qf, retract, trust_region_newton, truncated_cg,
)


def random_point(rng, k, n):
    return qf(rng.standard_normal((k, n)))


# -- geometry --------------------------------------------------------------------


def test_projection_kills_span(rng):
    U = random_point(rng, 3, 20)
    X = rng.standard_normal((3, 3))
    assert np.abs(project_tangent(U, X @ U)).max() <= 1e-14


def test_projection_keeps_horizontal_vectors(rng):
    U = random_point(rng, 2, 15)
    G = rng.standard_normal((2, 15))
    H = G - (G @ U.T) @ U
    np.testing.assert_allclose(project_tangent(U, H), H, atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_projection_is_idempotent(seed):
    rng = np.random.default_rng(seed)
    U = random_point(rng, 4, 50)
    P = project_tangent(U, rng.standard_normal((4, 50)))
    np.testing.assert_allclose(project_tangent(U, P), P, atol=1e-12)
    assert np.abs(P @ U.T).max() <= 1e-12


def test_projection_requires_orthonormal_base(rng):
    with pytest.raises(ContractViolation):
        project_tangent(2 * np.eye(2, 5), np.zeros((2, 5)))
    with pytest.raises(ContractViolation):
        project_tangent(np.eye(2, 5), np.zeros((3, 5)))


def test_retract_zero_step(rng):
    U = random_point(rng, 3, 12)
    np.testing.assert_allclose(retract(U, np.zeros_like(U)), U, atol=1e-15)


@pytest.mark.parametrize("t", [0.0, 0.5, -2.0, 10.0])
def test_retract_single_vector(t):
    U = np.array([[1.0, 0.0]])
    xi = np.array([[0.0, t]])
    expected = np.array([[1.0, t]]) / math.sqrt(1 + t * t)
    np.testing.assert_allclose(retract(U, xi), expected, rtol=1e-15, atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_retract_is_orthonormal_and_matches_householder_qr(seed):
    rng = np.random.default_rng(seed)
    U = random_point(rng, 4, 40)
    xi = project_tangent(U, rng.standard_normal((4, 40)))
    R = retract(U, xi)
    assert orthonormality_error(R) <= 1e-12
    Q, Rq = np.linalg.qr((U + xi).T)
    Q = Q * np.sign(np.diag(Rq))
    np.testing.assert_allclose(R, Q.T, atol=1e-12)


def test_qf_rejects_rank_deficient_input():
    with pytest.raises(np.linalg.LinAlgError):
        qf(np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]]))
    with pytest.raises(np.linalg.LinAlgError):
        qf(np.array([[0.0, 0.0]]))


def test_init_properties():
    U = init_p2(30, 3, seed=5)
    assert U.shape == (3, 30)
    assert orthonormality_error(U) <= 1e-12
    assert init_p2(30, 3, seed=5).tobytes() == U.tobytes()
    assert np.linalg.norm(init_p2(30, 3, seed=6) - U) > 0
    for k in (0, 30):
        with pytest.raises(ConfigError):
            init_p2(30, k, seed=0)


# -- truncated CG -------------------------------------------------------------------


CFG = SolverConfig().resolved(10, 1)


def test_tcg_zero_gradient():
    res = truncated_cg(lambda x: x, np.zeros((1, 4)), 1.0, CFG)
    assert res.status == TCG_INTERIOR and not np.any(res.step) and res.iters == 0


def test_tcg_identity_gives_newton_step(rng):
    g = rng.standard_normal((2, 5))
    res = truncated_cg(lambda x: x, g, 2 * np.linalg.norm(g), CFG)
    np.testing.assert_allclose(res.step, -g, atol=1e-12)
    assert res.status == TCG_INTERIOR
    assert res.model_decrease == pytest.approx(0.5 * np.sum(g * g), rel=1e-12)


def test_tcg_negative_curvature_reaches_boundary():
    # first CG direction is -g = -e1, along the negative eigenvalue
    D = np.array([[-1.0, 2.0]])
    g = np.array([[1.0, 0.0]])
    res = truncated_cg(lambda x: D * x, g, 0.3, CFG)
    assert res.status == TCG_NEGATIVE_CURVATURE
    assert np.linalg.norm(res.step) == pytest.approx(0.3, rel=1e-14)
    assert res.model_decrease > 0


def test_tcg_boundary_on_small_radius(rng):
    g = rng.standard_normal((1, 6))
    res = truncated_cg(lambda x: x, g, 0.1 * np.linalg.norm(g), CFG)
    assert res.status == TCG_BOUNDARY
    assert np.linalg.norm(res.step) == pytest.approx(0.1 * np.linalg.norm(g), rel=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_tcg_model_decrease_is_nonnegative(seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((8, 8))
    M = M + M.T
    g = rng.standard_normal((1, 8))
    delta = float(rng.uniform(0.01, 5))
    res = truncated_cg(lambda x: x @ M, g, delta, CFG)
    s = res.step[0]
    model = g[0] @ s + 0.5 * s @ M @ s
    assert res.model_decrease >= 0
    assert res.model_decrease == pytest.approx(-model, rel=1e-10, abs=1e-14)
    assert np.linalg.norm(s) <= delta * (1 + 1e-12)
    np.testing.assert_allclose(res.Hstep[0], s @ M, atol=1e-10)


# -- trust-region Newton ----------------------------------------------------------------


def laplacian_eigensum(W, k):
    L = np.diag(W.sum(axis=1)) - W
    return float(np.sum(np.linalg.eigvalsh(L)[:k]))


def test_constant_vector_converges_immediately(random_graph):
    g, _ = random_graph(0, 20)
    U0 = np.full((1, 20), 1 / math.sqrt(20))
    U, trace = trust_region_newton(g, 2.0, U0)
    assert len(trace.records) == 1
    assert trace.records[0].F == pytest.approx(0.0, abs=1e-28)
    assert trace.stage_status[2.0] == "converged"
    assert U.tobytes() == U0.tobytes()


def test_path_graph_two_vectors():
    g = Graph.from_edges(3, [0, 1], [1, 2])
    U, trace = trust_region_newton(g, 2.0, init_p2(3, 2, seed=1))
    assert plap.objective(g, U, 2.0) == pytest.approx(1.0, abs=1e-8)
    assert trace.stage_status[2.0] == "converged"


@pytest.mark.parametrize("seed, n, k", [(0, 30, 2), (1, 60, 4), (2, 120, 2), (3, 200, 4)])
def test_p2_matches_eigensolver(seed, n, k, random_graph):
    g, W = random_graph(seed, n, 6 / n)
    U, trace = trust_region_newton(g, 2.0, init_p2(g, k, seed=seed))
    assert plap.objective(g, U, 2.0) == pytest.approx(laplacian_eigensum(W, k), abs=1e-6)
    assert trace.stage_status[2.0] == "converged"


@pytest.mark.parametrize("p", [1.8, 1.4])
def test_trust_region_invariants(p, random_graph):
    g, _ = random_graph(11, 60, 0.08)
    U0, _ = trust_region_newton(g, 2.0, init_p2(g, 3, seed=0))
    U, trace = trust_region_newton(g, p, U0, SolverConfig(max_outer=60))
    assert orthonormality_error(U) <= 1e-10
    accepted = [r.F for r in trace.records if r.accepted]
    assert all(b < a for a, b in zip(accepted, accepted[1:]))
    Ffinal = plap.objective(g, U, p)
    assert Ffinal == trace.records[-1].F
    rgrad = project_tangent(U, plap.euc_grad(g, U, p))
    assert np.abs(rgrad @ U.T).max() <= 1e-10
    assert trace.records[-1].gradnorm == pytest.approx(np.linalg.norm(rgrad), rel=1e-9)


def test_zero_outer_iterations_returns_start(random_graph):
    g, _ = random_graph(1, 15)
    U0 = init_p2(g, 2, seed=0)
    U, trace = trust_region_newton(g, 1.5, U0, SolverConfig(max_outer=0))
    assert U.tobytes() == U0.tobytes()
    assert trace.stage_status[1.5] in ("max-outer", "converged")


def test_solver_error_carries_trace():
    # the huge weight overflows the numerator to inf
    g = Graph.from_edges(3, [0], [1], [1e308])
    U0 = qf(np.array([[1.0, -1.0, 0.5]]))
    with pytest.raises(SolverError) as info:
        trust_region_newton(g, 2.0, U0)
    assert info.value.trace is not None and info.value.p == 2.0
    with pytest.raises(ContractViolation):
        trust_region_newton(g, 2.0, 2 * U0)


# -- continuation --------------------------------------------------------------------------


def test_schedule_arithmetic():
    seq = ContinuationSchedule(p_final=1.5, factor=0.9).sequence()
    assert seq == pytest.approx([2.0, 1.8, 1.62, 1.5], abs=1e-15)
    assert ContinuationSchedule().sequence() == [2.0]
    for kwargs in (dict(factor=1.0), dict(p_final=1.0), dict(p_final=1.9, p_start=1.5)):
        with pytest.raises((ConfigError, DomainError)):
            ContinuationSchedule(**kwargs)


def test_continuation_at_two_is_single_solve(random_graph):
    g, _ = random_graph(4, 40, 0.1)
    cfg = SolverConfig(seed=3)
    U1, t1 = continuation_solve(g, 2, ContinuationSchedule(p_final=2.0), cfg)
    U2, t2 = trust_region_newton(g, 2.0, init_p2(g, 2, seed=3), cfg)
    assert U1.tobytes() == U2.tobytes()
    assert [r.F for r in t1.records] == [r.F for r in t2.records]


def test_continuation_improves_on_p2_embedding():
    g, _ = generate_synthetic(SyntheticSpec("ring-of-cliques", cliques=4, clique_size=5))
    pf = 1.3
    wins = 0
    for seed in range(10):
        stages = []
        U, _ = continuation_solve(g, 4, ContinuationSchedule(p_final=pf),
                                  SolverConfig(seed=seed), stages=stages)
        assert stages[0][0] == 2.0 and stages[-1][0] == pf
        U2 = stages[0][1]
        wins += plap.objective(g, U, pf) <= plap.objective(g, U2, pf)
    assert wins >= 9


def test_trace_round_trips(random_graph):
    g, _ = random_graph(2, 25)
    _, trace = continuation_solve(g, 2, ContinuationSchedule(p_final=1.6),
                                  SolverConfig(max_outer=25))
    text = trace.to_csv()
    assert text.startswith("# schema_version=1\n")
    back = SolveTrace.from_csv(text)
    assert len(back.records) == len(trace.records)
    for a, b in zip(back.records, trace.records):
        assert (a.p, a.iter, a.F, a.gradnorm, a.delta, a.tcg_iters, a.tcg_status, a.accepted) \
               == (b.p, b.iter, b.F, b.gradnorm, b.delta, b.tcg_iters, b.tcg_status, b.accepted)
    summary = trace.summary()
    assert [s["p"] for s in summary["stages"]] == ContinuationSchedule(p_final=1.6).sequence()
