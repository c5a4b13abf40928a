import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from glr.graph_core import (
    CsrMatrix,
    GraphError,
    SparseGraph,
    build_graph,
    dataset_stats,
    hconcat,
    row_normalize,
    row_submatrix,
    spmm_dense,
    spmv,
)

from conftest import random_graph


def sparse_dense(shape, density=0.3):
    return arrays(
        np.float64,
        shape,
        elements=st.one_of(st.just(0.0), st.floats(-5, 5, allow_nan=False).filter(lambda v: abs(v) > 1e-3)),
    )


@st.composite
def matrices(draw, max_dim=12):
    r = draw(st.integers(0, max_dim))
    c = draw(st.integers(0, max_dim))
    return draw(sparse_dense((r, c)))


# -- CsrMatrix ---------------------------------------------------------------

@given(matrices())
def test_dense_round_trip_and_canonical(a):
    m = CsrMatrix.from_dense(a)
    m.check()
    assert np.array_equal(m.to_dense(), a)
    assert m.nnz == np.count_nonzero(a)
    assert np.all(np.diff(m.row_ptr) >= 0)


def test_from_triplets_sums_duplicates_and_drops_zeros():
    m = CsrMatrix.from_triplets([0, 0, 1, 1], [1, 1, 0, 2], [1.0, 2.0, 3.0, 0.0], (2, 3))
    assert m.nnz == 2
    assert np.array_equal(m.to_dense(), [[0, 3, 0], [3, 0, 0]])
    last = CsrMatrix.from_triplets([0, 0], [1, 1], [1.0, 2.0], (1, 2), sum_duplicates=False)
    assert last.to_dense()[0, 1] == 2.0


def test_from_triplets_range_errors():
    with pytest.raises(GraphError):
        CsrMatrix.from_triplets([2], [0], [1.0], (2, 2))
    with pytest.raises(GraphError):
        CsrMatrix.from_triplets([0], [5], [1.0], (2, 2))


def test_invalid_csr_rejected():
    with pytest.raises(GraphError):
        CsrMatrix(1, 3, np.array([0, 2]), np.array([2, 1]), np.array([1.0, 1.0]))
    with pytest.raises(GraphError):
        CsrMatrix(1, 2, np.array([0, 1]), np.array([2]), np.array([1.0]))


def test_arrays_are_read_only():
    m = CsrMatrix.identity(3)
    with pytest.raises(ValueError):
        m.values[0] = 5.0


@given(matrices())
def test_transpose_matches_dense(a):
    assert np.array_equal(CsrMatrix.from_dense(a).transpose().to_dense(), a.T)


# -- hconcat -----------------------------------------------------------------

def test_hconcat_column_shift():
    a = CsrMatrix.from_dense([[1.0, 0.0]])
    b = CsrMatrix.from_dense([[0.0, 2.0, 0.0]])
    c = hconcat(a, b)
    assert c.shape == (1, 5)
    assert c.col_idx.tolist() == [0, 3]
    assert c.values.tolist() == [1.0, 2.0]


def test_hconcat_with_empty_is_identity(rng):
    m = CsrMatrix.from_dense(rng.random((4, 3)) * (rng.random((4, 3)) < 0.5))
    assert hconcat(m, CsrMatrix.empty(4, 0)).equals(m)


def test_hconcat_row_mismatch():
    with pytest.raises(GraphError):
        hconcat(CsrMatrix.identity(2), CsrMatrix.identity(3))


@st.composite
def same_rows(draw):
    r = draw(st.integers(0, 10))
    a = draw(sparse_dense((r, draw(st.integers(0, 8)))))
    b = draw(sparse_dense((r, draw(st.integers(0, 8)))))
    return a, b


@given(same_rows())
def test_hconcat_split_recovers_parts(ab):
    a, b = ab
    ca, cb = CsrMatrix.from_dense(a), CsrMatrix.from_dense(b)
    c = hconcat(ca, cb)
    c.check()
    assert c.nnz == ca.nnz + cb.nnz
    d = c.to_dense()
    assert np.array_equal(d[:, : a.shape[1]], a)
    assert np.array_equal(d[:, a.shape[1] :], b)
    assert CsrMatrix.from_dense(d[:, : a.shape[1]]).equals(ca)


# -- kernels -----------------------------------------------------------------

def test_spmv_identity_and_permutation():
    assert spmv(CsrMatrix.identity(3), [1, 2, 3]).tolist() == [1, 2, 3]
    assert spmv(CsrMatrix.from_dense([[0, 1], [1, 0]]), [3, 5]).tolist() == [5, 3]


def test_spmv_random_50_vs_dense(rng):
    a = rng.standard_normal((50, 50)) * (rng.random((50, 50)) < 0.1)
    x = rng.standard_normal(50)
    assert np.max(np.abs(spmv(CsrMatrix.from_dense(a), x) - a @ x)) < 1e-12


@settings(max_examples=60)
@given(st.integers(1, 64), st.integers(1, 64), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_kernels_match_dense_oracle(r, c, k, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((r, c)) * (rng.random((r, c)) < 0.2)
    m = CsrMatrix.from_dense(a)
    x = rng.standard_normal(c)
    b = rng.standard_normal((c, k))
    # dense oracle via explicit loops over nonzeros
    ref_v = np.zeros(r)
    ref_m = np.zeros((r, k))
    for i in range(r):
        for j in range(c):
            if a[i, j] != 0:
                ref_v[i] += a[i, j] * x[j]
                ref_m[i] += a[i, j] * b[j]
    assert np.max(np.abs(spmv(m, x) - ref_v), initial=0) < 1e-12
    assert np.max(np.abs(spmm_dense(m, b) - ref_m), initial=0) < 1e-12


def test_kernel_dimension_errors():
    m = CsrMatrix.identity(3)
    with pytest.raises(GraphError):
        spmv(m, [1, 2])
    with pytest.raises(GraphError):
        spmm_dense(m, np.ones((2, 2)))


def test_row_submatrix_keeps_order(rng):
    a = rng.random((6, 4)) * (rng.random((6, 4)) < 0.5)
    m = CsrMatrix.from_dense(a)
    rows = [5, 0, 3, 3]
    sub = row_submatrix(m, rows)
    sub.check()
    assert np.array_equal(sub.to_dense(), a[rows])
    assert row_submatrix(m, []).shape == (0, 4)
    with pytest.raises(GraphError):
        row_submatrix(m, [6])


def test_row_normalize():
    m = CsrMatrix.from_dense([[1.0, 3.0], [0.0, 0.0], [3.0, 4.0]])
    assert np.allclose(row_normalize(m, "l1").to_dense(), [[0.25, 0.75], [0, 0], [3 / 7, 4 / 7]])
    assert np.allclose(row_normalize(m, "l2").to_dense()[2], [0.6, 0.8])


# -- build_graph -------------------------------------------------------------

def test_single_edge_symmetric():
    g = build_graph([(0, 1)], [], [0, 1], 2, 1)
    assert g.adjacency.row(0)[0].tolist() == [1]
    assert g.adjacency.row(1)[0].tolist() == [0]
    assert g.degrees().tolist() == [1, 1]


def test_self_loop_and_duplicate_removed():
    g = build_graph([(0, 0), (0, 1), (1, 0)], [], [0, 1], 2, 1)
    assert g.adjacency.nnz == 2
    assert np.all(g.adjacency.values == 1.0)


def test_labels_densified_with_mapping():
    g = build_graph([(0, 1)], [], [10, 30, 10], 3, 1)
    assert g.labels.tolist() == [0, 1, 0]
    assert g.class_count == 2
    assert g.label_names == (10, 30)


def test_build_graph_errors():
    with pytest.raises(GraphError):
        build_graph([(0, 3)], [], [0, 1, 0], 3, 1)
    with pytest.raises(GraphError):
        build_graph([], [(0, 2, 1.0)], [0, 1], 2, 2)
    with pytest.raises(GraphError):
        build_graph([], [], [], 0, 1)


def test_sparse_graph_rejects_missing_class():
    a = CsrMatrix.empty(2, 2)
    with pytest.raises(GraphError):
        SparseGraph(a, CsrMatrix.empty(2, 1), np.array([0, 2]), 3)


@settings(max_examples=50)
@given(st.integers(1, 15), st.integers(0, 2**32 - 1))
def test_graph_invariants_and_idempotent_rebuild(n, seed):
    rng = np.random.default_rng(seed)
    raw = rng.integers(0, n, size=(rng.integers(0, 3 * n + 1), 2))
    labels = rng.integers(0, 3, n)
    g = build_graph(raw, CsrMatrix.from_dense(rng.random((n, 2))), labels, n, 2)
    a = g.adjacency.to_dense()
    assert np.array_equal(a, a.T)
    assert np.all(np.diag(a) == 0)
    assert set(np.unique(a)) <= {0.0, 1.0}
    assert g.is_symmetric()
    assert np.array_equal(g.degrees(), a.sum(axis=1))
    again = build_graph(g.edge_list(), g.features, g.labels, n, 2)
    assert again.adjacency.equals(g.adjacency)
    assert again.adjacency.values.tobytes() == g.adjacency.values.tobytes()


# -- stats -------------------------------------------------------------------

def test_complete_graph_density():
    edges = [(u, v) for u in range(4) for v in range(u + 1, 4)]
    st_ = dataset_stats(build_graph(edges, [], [0, 1, 0, 1], 4, 1))
    assert st_.density == 1.0
    assert st_.m == 12


def test_star_degree_distribution():
    g = build_graph([(0, i) for i in range(1, 6)], [], [0] * 6, 6, 1)
    s = dataset_stats(g)
    assert s.degree_distribution == {1: 5, 5: 1}
    assert s.cumulative_degree == [(1, 6), (5, 1)]


def test_density_conventions_on_cora_sized_counts():
    # a graph with n=2708 and 10556 stored entries, like the Cora citation graph
    n = 2708
    rng = np.random.default_rng(0)
    edges = set()
    while len(edges) < 10556 // 2:
        u, v = sorted(rng.integers(0, n, 2))
        if u != v:
            edges.add((u, v))
    s = dataset_stats(build_graph(np.array(sorted(edges)), [], np.arange(n) % 7, n, 1))
    assert s.m == 10556
    assert s.density == pytest.approx(10556 / (2708 * 2707))
    assert f"{s.density:.2e}" == "1.44e-03"
    assert f"{s.density_table:.2e}" == "2.88e-03"


def test_hconcat_cora_dimensions():
    a = CsrMatrix.empty(2708, 2708)
    x = CsrMatrix.empty(2708, 1433)
    assert hconcat(a, x).shape == (2708, 4141)


def test_stats_isolated_and_class_counts(rng):
    g = random_graph(rng, 10, p_edge=0.0)
    s = dataset_stats(g)
    assert s.isolated_nodes == 10
    assert sum(s.class_counts) == 10
