import io
import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pspectral.errors import ConfigError, GraphValidationError, InputError, MatrixMarketError
from pspectral.graph_io import (
    Graph, SyntheticSpec, connected_components, generate_synthetic,
    parse_matrix_market, read_matrix_market, write_matrix_market,
)

import oracles


def mm(body, header="%%MatrixMarket matrix coordinate real symmetric"):
    return (header + "\n" + body).encode()


def assert_graph_invariants(g):
    A = g.adjacency
    A.check()
    assert A.is_symmetric()
    assert not np.any(A.row_indices() == A.indices)
    assert np.all(A.data > 0)
    D = A.to_dense()
    np.testing.assert_array_equal(D, D.T)


def test_pattern_single_edge():
    g = parse_matrix_market(mm("2 2 1\n2 1\n", "%%MatrixMarket matrix coordinate pattern symmetric"))
    assert (g.n, g.m) == (2, 1)
    assert g.to_dense().tolist() == [[0.0, 1.0], [1.0, 0.0]]


def test_self_loop_dropped(caplog):
    body = "% a comment\n3 3 3\n2 1 1.5\n3 2 2.0\n3 3 4.0\n"
    with caplog.at_level(logging.WARNING):
        g = parse_matrix_market(mm(body))
    assert (g.n, g.m) == (3, 2)
    assert g.to_dense()[2, 2] == 0
    assert "self-loop" in caplog.text


def test_general_is_max_symmetrized():
    body = "2 2 2\n1 2 2.0\n2 1 5.0\n"
    g = parse_matrix_market(mm(body, "%%MatrixMarket matrix coordinate real general"))
    assert g.to_dense().tolist() == [[0.0, 5.0], [5.0, 0.0]]


def test_integer_field_and_text_stream():
    text = "%%MatrixMarket matrix coordinate integer symmetric\n3 3 2\n2 1 3\n3 1 4\n"
    g = parse_matrix_market(io.StringIO(text))
    assert g.to_dense()[0].tolist() == [0.0, 3.0, 4.0]


@pytest.mark.parametrize("data, lineno, match", [
    (b"", 1, "empty"),
    (b"%%MatrixMarket matrix array real general\n2 2\n", 1, "format"),
    (b"%%MatrixMarket matrix coordinate complex general\n", 1, "field"),
    (b"%%MatrixMarket matrix coordinate real hermitian\n", 1, "symmetry"),
    (b"hello\n", 1, "MatrixMarket"),
    (mm("0 0 0\n"), 2, "nonpositive"),
    (mm("2 3 0\n"), 2, "square"),
    (mm("2 2 1\n3 1 1.0\n"), 3, "out of range"),
    (mm("2 2 1\n2 0 1.0\n"), 3, "out of range"),
    (mm("3 3 2\n2 1 1.0\n2 1 2.0\n"), 4, "duplicate"),
    (mm("3 3 2\n2 1 1.0\n1 2 2.0\n"), 4, "duplicate"),
    (mm("2 2 1\n2 1 -1.0\n"), 3, "positive"),
    (mm("2 2 1\n2 1 0\n"), 3, "positive"),
    (mm("2 2 1\n2 1\n"), 3, "fields"),
    (mm("2 2 1\n2 1 x\n"), 3, "parse"),
    (mm("2 2 2\n2 1 1.0\n"), 3, "declared 2"),
    (mm("2 2 1\n2 1 1.0\n2 1 1.0\n"), 4, "more entries"),
])
def test_malformed_inputs_report_line(data, lineno, match):
    with pytest.raises(MatrixMarketError, match=match) as info:
        parse_matrix_market(data)
    assert info.value.lineno == lineno
    assert isinstance(info.value, InputError)


def test_general_duplicate_exact_pair_rejected():
    body = "2 2 2\n1 2 1.0\n1 2 3.0\n"
    with pytest.raises(MatrixMarketError, match="duplicate") as info:
        parse_matrix_market(mm(body, "%%MatrixMarket matrix coordinate real general"))
    assert info.value.lineno == 4


def test_isolated_vertices_are_flagged(caplog):
    with caplog.at_level(logging.WARNING):
        g = parse_matrix_market(mm("4 4 1\n2 1 1.0\n"))
    assert g.isolated().tolist() == [2, 3]
    assert "isolated" in caplog.text


def test_read_missing_file():
    with pytest.raises(InputError):
        read_matrix_market("/nonexistent/graph.mtx")


@pytest.mark.parametrize("seed", range(5))
def test_write_parse_round_trip(seed, random_graph, tmp_path):
    g, _ = random_graph(seed, 30, 0.2)
    buf = io.StringIO()
    write_matrix_market(g, buf, comment="round trip")
    back = parse_matrix_market(io.StringIO(buf.getvalue()))
    assert back == g
    path = tmp_path / "g.mtx"
    write_matrix_market(g, path)
    assert read_matrix_market(path) == g


def test_graph_validation():
    with pytest.raises(GraphValidationError):
        Graph.from_dense([[0, 1.0], [2.0, 0]])
    with pytest.raises(GraphValidationError):
        Graph.from_dense([[1.0, 1.0], [1.0, 0]])
    with pytest.raises(GraphValidationError):
        Graph.from_dense([[0, -1.0], [-1.0, 0]])
    with pytest.raises(GraphValidationError):
        Graph.from_edges(3, [0, 1], [1, 0])


# -- synthetic ------------------------------------------------------------------


def test_ring_of_cliques_counts():
    g, truth = generate_synthetic(SyntheticSpec("ring-of-cliques", cliques=4, clique_size=5))
    assert (g.n, g.m) == (20, 4 * 10 + 4)
    assert truth.k == 4 and truth.sizes().tolist() == [5] * 4
    assert_graph_invariants(g)


def test_sbm_without_inter_edges_is_disconnected():
    spec = SyntheticSpec("sbm", blocks=3, block_size=30, p_in=0.3, p_out=0.0, seed=7)
    g, truth = generate_synthetic(spec)
    labels = connected_components(g)
    assert labels.max() + 1 >= 3
    # every component lies inside one block
    for c in np.unique(labels):
        assert np.unique(truth.labels[labels == c]).size == 1


def test_sbm_edge_count_within_three_sigma():
    spec = SyntheticSpec("sbm", blocks=4, block_size=200, p_in=0.05, p_out=0.002, seed=42)
    g, _ = generate_synthetic(spec)
    # binomial totals: 4 * C(200, 2) intra pairs and C(4, 2) * 200^2 inter pairs
    intra, inter = 4 * 19900, 6 * 40000
    mean = intra * 0.05 + inter * 0.002
    sd = np.sqrt(intra * 0.05 * 0.95 + inter * 0.002 * 0.998)
    assert mean == pytest.approx(4460.0)
    assert sd == pytest.approx(65.2690, abs=1e-4)
    assert abs(g.m - mean) <= 3 * sd
    assert_graph_invariants(g)


def test_grid2d_quadrants():
    g, truth = generate_synthetic(SyntheticSpec("grid2d", rows=4, cols=6))
    assert (g.n, g.m) == (24, 4 * 5 + 3 * 6)
    assert truth.labels.reshape(4, 6).tolist() == [
        [1, 1, 1, 2, 2, 2], [1, 1, 1, 2, 2, 2], [3, 3, 3, 4, 4, 4], [3, 3, 3, 4, 4, 4]]


@pytest.mark.parametrize("family", ["sbm", "grid2d", "ring-of-cliques"])
def test_generation_is_pure(family):
    spec = SyntheticSpec(family, blocks=3, block_size=20, p_in=0.4, p_out=0.05, rows=5,
                         cols=5, cliques=3, clique_size=4, seed=11)
    g1, t1 = generate_synthetic(spec)
    g2, t2 = generate_synthetic(spec)
    assert g1 == g2 and t1 == t2
    assert_graph_invariants(g1)


def test_different_seeds_differ():
    a, _ = generate_synthetic(SyntheticSpec("sbm", block_size=40, p_in=0.2, seed=1))
    b, _ = generate_synthetic(SyntheticSpec("sbm", block_size=40, p_in=0.2, seed=2))
    assert a != b


@pytest.mark.parametrize("kwargs", [
    dict(family="sbm", block_size=0),
    dict(family="sbm", p_in=1.5),
    dict(family="sbm", p_out=-0.1),
    dict(family="grid2d", rows=1),
    dict(family="ring-of-cliques", clique_size=1),
    dict(family="nope"),
    dict(family="sbm", weight=0.0),
])
def test_infeasible_specs(kwargs):
    with pytest.raises(ConfigError):
        SyntheticSpec(**kwargs)


def test_spec_parsing(tmp_path):
    s = SyntheticSpec.parse("sbm:blocks=3,block_size=10,p_in=0.5,p_out=0.01,seed=0x10")
    assert (s.family, s.blocks, s.block_size, s.p_in, s.seed) == ("sbm", 3, 10, 0.5, 16)
    cfg = tmp_path / "spec.cfg"
    cfg.write_text("# ring\nfamily = ring-of-cliques\ncliques = 6  # six\nclique-size = 3\n")
    s = SyntheticSpec.parse(str(cfg))
    assert (s.family, s.cliques, s.clique_size) == ("ring-of-cliques", 6, 3)
    with pytest.raises(ConfigError):
        SyntheticSpec.parse("sbm:colour=blue")
    with pytest.raises(ConfigError):
        SyntheticSpec.parse("sbm:blocks")


# -- components -------------------------------------------------------------------


def test_components_examples(two_triangles):
    assert connected_components(two_triangles).tolist() == [0, 0, 0, 1, 1, 1]
    path = Graph.from_edges(5, [0, 1, 2, 3], [1, 2, 3, 4])
    assert connected_components(path).tolist() == [0] * 5


def test_component_labels_ordered_by_smallest_node():
    g = Graph.from_edges(5, [3, 1], [4, 2])
    assert connected_components(g).tolist() == [0, 1, 1, 2, 2]


@pytest.mark.parametrize("seed", range(6))
def test_components_match_union_find(seed):
    spec = SyntheticSpec("sbm", blocks=4, block_size=25, p_in=0.06, p_out=0.0, seed=seed)
    g, _ = generate_synthetic(spec)
    labels = connected_components(g)
    i, j, _ = g.edges()
    expected = oracles.components_union_find(g.n, zip(i.tolist(), j.tolist()))
    got = {frozenset(np.flatnonzero(labels == c).tolist()) for c in np.unique(labels)}
    assert got == expected


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 25), density=st.floats(0.0, 0.6), seed=st.integers(0, 2**32 - 1))
def test_random_graphs_round_trip_and_validate(n, density, seed):
    W = oracles.random_weights(np.random.default_rng(seed), n, density, connected=False)
    g = Graph.from_dense(W)
    assert_graph_invariants(g)
    buf = io.StringIO()
    write_matrix_market(g, buf)
    assert parse_matrix_market(io.StringIO(buf.getvalue())) == g
