import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from lapprune.data import synthetic_blobs
from lapprune.estimators import LookaheadPruner, NetworkClassifier, PrunedNetworkClassifier
from lapprune.nn.network import architecture, glorot_init


@pytest.fixture(scope="module")
def blobs():
    d = synthetic_blobs(classes=3, dim=20, count=300, seed=1)
    return d.inputs, np.array(["a", "b", "c"])[d.labels]


def test_classifier_fit_predict(blobs):
    X, y = blobs
    clf = NetworkClassifier(steps=300, random_state=0).fit(X, y)
    assert list(clf.classes_) == ["a", "b", "c"]
    assert clf.n_features_in_ == 20
    assert clf.score(X, y) > 0.9
    proba = clf.predict_proba(X[:5])
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert clf.decision_function(X[:5]).shape == (5, 3)


def test_classifier_is_deterministic_and_clonable(blobs):
    X, y = blobs
    a = NetworkClassifier(steps=100, random_state=3).fit(X, y)
    b = clone(a).fit(X, y)
    np.testing.assert_array_equal(a.decision_function(X), b.decision_function(X))
    assert a.get_params()["random_state"] == 3


def test_classifier_errors(blobs):
    X, y = blobs
    with pytest.raises(NotFittedError):
        NetworkClassifier().predict(X)
    with pytest.raises(ValueError):
        NetworkClassifier(steps=5).fit(X, np.zeros(len(X)))
    clf = NetworkClassifier(steps=5).fit(X, y)
    with pytest.raises(ValueError):
        clf.predict(X[:, :10])


def test_pruner_fit_transform():
    net = glorot_init(architecture("fcn-small"), seed=0)
    pruner = LookaheadPruner(criterion="LAP", tau=2).fit(net)
    out = pruner.transform(net)
    assert out is not net
    assert out.surviving_fraction() == pytest.approx(pruner.surviving_fraction_)
    assert 0.2 < pruner.surviving_fraction_ < 0.3
    assert net.surviving_fraction() == 1.0


def test_pruner_data_dependent_criterion():
    net = glorot_init(architecture("fcn-small", input_shape=(20,), n_classes=3), seed=0)
    d = synthetic_blobs(classes=3, dim=20, count=50)
    pruner = LookaheadPruner(criterion="LAP_act", tau=1).fit(net, d.inputs, d.labels)
    assert set(pruner.masks_) == set(net.prunable)
    with pytest.raises(ValueError):
        LookaheadPruner(criterion="OBD").fit(net)
    with pytest.raises(TypeError):
        LookaheadPruner().fit("not a network")
    with pytest.raises(NotFittedError):
        LookaheadPruner().transform(net)


def test_pruned_classifier(blobs):
    X, y = blobs
    clf = PrunedNetworkClassifier(steps=300, retrain_steps=200, tau=2).fit(X, y)
    assert clf.dense_network_.surviving_fraction() == 1.0
    assert clf.surviving_fraction_ < 0.3
    assert clf.score(X, y) > 0.8
