import numpy as np
import pytest
import scipy.sparse as sp

from n2n.datasets import DatasetNotFound, load_dataset, make_citation_like


def test_planetoid_raw_layout(tmp_path):
    d = tmp_path / "tiny"
    d.mkdir()
    (d / "tiny.content").write_text("31 1 0 1 A\n7 0 1 0 B\n55 1 1 0 A\n", encoding="utf-8")
    (d / "tiny.cites").write_text("31 7\n7 55\n99 31\n", encoding="utf-8")
    ds = load_dataset("tiny", tmp_path)
    assert ds.graph.num_nodes == 3
    assert ds.graph.num_edges == 2
    assert ds.features.shape == (3, 3)
    assert ds.labels.tolist() == [0, 1, 0]
    assert len(ds.sources) == 2


def test_plain_layout_reindexes_rows(tmp_path):
    d = tmp_path / "plain"
    d.mkdir()
    (d / "edges.txt").write_text("2 0\n0 1\n", encoding="utf-8")
    (d / "features.csv").write_text("0,0\n1,1\n0,1\n", encoding="utf-8")
    (d / "labels.csv").write_text("5\n6\n7\n", encoding="utf-8")
    ds = load_dataset("plain", tmp_path)
    # first appearance order is 2, 0, 1
    assert ds.graph.original_ids.tolist() == [2, 0, 1]
    assert ds.labels.tolist() == [7, 5, 6]
    np.testing.assert_array_equal(ds.features[0], [0, 1])


def test_npz_layout_without_attributes(tmp_path):
    rng = np.random.default_rng(0)
    n = 7600
    a = sp.random(n, n, density=4 / n, random_state=1, format="csr")
    a = ((a + a.T) > 0).astype(float).tocsr()
    np.savez(tmp_path / "lastfm_like.npz", adj_data=a.data, adj_indices=a.indices,
             adj_indptr=a.indptr, adj_shape=a.shape, labels=rng.integers(0, 5, n))
    ds = load_dataset("lastfm_like", tmp_path)
    assert ds.graph.num_nodes == n
    assert sp.issparse(ds.features) and ds.features.shape == (n, n)
    assert ds.num_classes == 5


def test_missing_dataset(tmp_path):
    with pytest.raises(DatasetNotFound, match="N2N_DATA"):
        load_dataset("cora", tmp_path)


def test_surrogate_is_deterministic_and_homophilous():
    a, b = make_citation_like(seed=3), make_citation_like(seed=3)
    assert a.graph == b.graph
    np.testing.assert_array_equal(a.features, b.features)
    e = a.graph.edges()
    assert np.mean(a.labels[e[:, 0]] == a.labels[e[:, 1]]) > 0.7
