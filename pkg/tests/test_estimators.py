import numpy as np
import pytest
import scipy.sparse as sp
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from n2n import LinearProbe, N2NClassifier, N2NEmbedder, NFN2NEmbedder
from n2n._validation import check_features, check_labels
from n2n.datasets import make_citation_like
from n2n.tensor import DimensionError

FAST = dict(hidden=8, epochs=3, seed=0)


@pytest.fixture(scope="module")
def ds():
    return make_citation_like(num_nodes=90, num_classes=3, num_words=40, p_in=0.1, seed=2)


def test_get_params_and_clone():
    est = NFN2NEmbedder(constraint="WC", beta=0.1)
    params = est.get_params()
    assert params["constraint"] == "WC" and params["beta"] == 0.1
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(hidden=32)
    assert est.hidden == 32


@pytest.mark.parametrize("cls", [N2NEmbedder, NFN2NEmbedder])
def test_embedders_fit_transform(ds, cls):
    est = cls(**FAST, batch_size=64)
    with pytest.raises(NotFittedError):
        est.transform(ds.features)
    est.fit(ds.features, graph=ds.graph)
    z = est.transform(ds.features)
    assert z.shape == (90, 8)
    np.testing.assert_allclose(z, est.embedding_, atol=1e-10)
    assert est.n_features_in_ == 40
    assert est.report_.test_f1 is None


def test_classifier_predicts_labels(ds):
    clf = N2NClassifier(**FAST, patience=0).fit(ds.features, ds.labels, graph=ds.graph)
    pred = clf.predict(ds.features)
    assert pred.shape == (90,)
    assert set(pred.tolist()) <= {0, 1, 2}
    assert clf.decision_function(ds.features).shape == (90, 3)
    assert 0.0 <= clf.score(ds.features, ds.labels) <= 1.0


def test_estimators_validate_inputs(ds):
    with pytest.raises(TypeError):
        N2NEmbedder(**FAST).fit(ds.features, graph="not a graph")
    with pytest.raises(DimensionError):
        N2NEmbedder(**FAST).fit(ds.features[:10], graph=ds.graph)
    with pytest.raises(DimensionError):
        N2NClassifier(**FAST).fit(ds.features, ds.labels[:5], graph=ds.graph)


def test_linear_probe_estimator():
    rng = np.random.default_rng(0)
    y = np.repeat([0, 1, 2], 40)
    x = rng.normal(size=(120, 5)) + 5.0 * np.eye(3, 5)[y]
    probe = LinearProbe(epochs=80, lr=0.05).fit(x, y)
    assert probe.score(x, y) > 0.95
    assert LinearProbe(epochs=80, lr=0.05).fit(sp.csr_matrix(x), y).predict(x).shape == (120,)


def test_validation_helpers():
    with pytest.raises(ValueError):
        check_features(np.array([[np.inf]]))
    with pytest.raises(DimensionError):
        check_features(np.ones(3))
    with pytest.raises(ValueError):
        check_labels([0.5, 1])
    with pytest.raises(ValueError):
        check_labels([-1, 0])
    assert check_labels([1.0, 2.0]).dtype == np.int64
