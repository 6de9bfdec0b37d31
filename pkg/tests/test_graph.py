import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from n2n.graph import (Graph, GraphFormatError, Split, laplacian, load_edge_list, load_features,
                       load_labels, load_split, make_split, write_edge_list, write_split)
from n2n.tensor import DimensionError

edge_lists = st.integers(1, 25).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)),
                                             max_size=60)))


def test_from_edges_symmetrises_and_dedups():
    g = Graph.from_edges([0, 1, 1, 2, 2], [1, 0, 2, 2, 1], num_nodes=4)
    assert g.num_nodes == 4
    assert g.num_edges == 2
    assert g.neighbors_of(1).tolist() == [0, 2]
    assert g.isolated.tolist() == [False, False, False, True]
    g.validate()


def test_edges_and_adjacency(path4):
    assert path4.edges().tolist() == [[0, 1], [1, 2], [2, 3]]
    a = path4.adjacency().toarray()
    np.testing.assert_array_equal(a, a.T)
    assert a.sum() == 6


@settings(max_examples=60, deadline=None)
@given(edge_lists)
def test_csr_matches_dense_adjacency(case):
    n, pairs = case
    src = [p[0] for p in pairs]
    dst = [p[1] for p in pairs]
    g = Graph.from_edges(src, dst, num_nodes=n)
    g.validate()
    dense = np.zeros((n, n))
    for a, b in pairs:
        if a != b:
            dense[a, b] = dense[b, a] = 1
    np.testing.assert_array_equal(g.adjacency().toarray(), dense)
    np.testing.assert_array_equal(g.degrees, dense.sum(axis=1))


def test_from_adjacency_roundtrip(small_graph):
    assert Graph.from_adjacency(small_graph.adjacency()) == small_graph


def test_rejects_bad_input():
    with pytest.raises(GraphFormatError):
        Graph.from_edges([0], [5], num_nodes=3)
    with pytest.raises(DimensionError):
        Graph.from_edges([0, 1], [1])
    with pytest.raises(GraphFormatError):
        Graph(np.array([0, 1]), np.array([0]))


def test_edge_list_compacts_ids(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("# comment\n10 20\n20 30\n\n30 30\n40 40\n", encoding="utf-8")
    g = load_edge_list(p)
    assert g.original_ids.tolist() == [10, 20, 30, 40]
    assert g.num_edges == 2
    assert g.isolated.tolist() == [False, False, False, True]


def test_edge_list_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("1 2 3\n", encoding="utf-8")
    with pytest.raises(GraphFormatError, match="bad.txt:1"):
        load_edge_list(p)
    p.write_text("a b\n", encoding="utf-8")
    with pytest.raises(GraphFormatError):
        load_edge_list(p)
    p.write_text("# nothing\n", encoding="utf-8")
    with pytest.raises(GraphFormatError):
        load_edge_list(p)
    with pytest.raises(FileNotFoundError):
        load_edge_list(tmp_path / "missing.txt")


@settings(max_examples=40, deadline=None)
@given(edge_lists)
def test_edge_list_roundtrip(tmp_path_factory, case):
    n, pairs = case
    g = Graph.from_edges([p[0] for p in pairs], [p[1] for p in pairs], num_nodes=n)
    path = tmp_path_factory.mktemp("rt") / "g.txt"
    write_edge_list(g, path)
    back = load_edge_list(path)
    assert back == g
    assert back.original_ids.tolist() == list(range(n))


def test_laplacian_rows_sum_to_zero(small_graph):
    lap = laplacian(small_graph)
    np.testing.assert_allclose(np.asarray(lap.sum(axis=1)).ravel(), 0.0)
    assert sp.issparse(lap)
    ev = np.linalg.eigvalsh(lap.toarray())
    assert ev.min() > -1e-10


def test_features_and_labels(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("0,1\n1,0\n", encoding="utf-8")
    assert load_features(p).shape == (2, 2)
    p.write_text("0,2\n1,0\n", encoding="utf-8")
    with pytest.warns(UserWarning):
        load_features(p)
    p.write_text("nan,1\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_features(p)
    q = tmp_path / "y.csv"
    q.write_text("0\n1\n2\n", encoding="utf-8")
    assert load_labels(q).tolist() == [0, 1, 2]
    q.write_text("0.5\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_labels(q)


def test_split_validation():
    with pytest.raises(ValueError):
        Split([0, 1], [1], [2])
    with pytest.raises(ValueError):
        Split([], [1], [2])
    s = Split([0], [1], [2])
    with pytest.raises(ValueError):
        s.check_nodes(2)


def test_stratified_split_counts():
    y = np.repeat([0, 1, 2], [10, 20, 7])
    s = make_split(y, seed=3)
    assert np.bincount(y[s.train]).tolist() == [6, 12, 4]
    assert np.bincount(y[s.val]).tolist() == [2, 4, 1]
    assert s.train.size + s.val.size + s.test.size == y.size
    assert make_split(y, seed=3) == s
    assert make_split(y, seed=4) != s


def test_split_too_small_class():
    with pytest.raises(ValueError, match="class 1"):
        make_split(np.array([0] * 10 + [1]))


def test_split_file_roundtrip(tmp_path):
    s = Split([0, 3], [1], [2, 4])
    p = write_split(s, tmp_path / "s.txt")
    assert load_split(p) == s
    assert make_split(np.zeros(5, int), scheme="file", path=p) == s
    p.write_text("train: 0\nval: 1\n", encoding="utf-8")
    with pytest.raises(GraphFormatError):
        load_split(p)
