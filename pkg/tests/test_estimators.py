import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from advrep import DannClassifier, LeidenClustering, NeighborEmbedding2D
from advrep.errors import ContractError


@pytest.fixture(scope="module")
def fitted_dann(tiny_dataset):
    est = DannClassifier(hidden_dim=8, epochs=8, batch_size=16, seed=2)
    return est.fit(tiny_dataset.X, tiny_dataset.label, tiny_dataset.domain), tiny_dataset


class TestDannClassifier:
    def test_sklearn_param_contract(self):
        est = DannClassifier(hidden_dim=32, epochs=5)
        params = est.get_params()
        assert params["hidden_dim"] == 32 and params["epochs"] == 5
        twin = clone(est)
        assert twin.get_params() == params

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            DannClassifier().predict(np.ones((2, 3)))

    def test_fit_predict_shapes(self, fitted_dann):
        est, ds = fitted_dann
        proba = est.predict_proba(ds.X[:10])
        assert proba.shape == (10, 2)
        assert np.allclose(proba.sum(axis=1), 1.0)
        assert est.predict(ds.X[:10]).shape == (10,)
        assert est.predict_domain_proba(ds.X[:10]).shape == (10, ds.n_domains)
        assert set(np.unique(est.predict_domain(ds.X[:10]))) <= set(range(ds.n_domains))

    def test_transform_returns_activations(self, fitted_dann):
        est, ds = fitted_dann
        acts = est.transform(ds.X[:6])
        assert acts.shape == (6, 8)
        with pytest.raises(ContractError):
            est.transform(ds.X[:6], layer="bogus")

    def test_score_is_accuracy(self, fitted_dann):
        est, ds = fitted_dann
        score = est.score(ds.X, ds.label)
        assert 0.0 <= score <= 1.0


class TestNeighborEmbedding2D:
    def test_fit_transform(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(40, 6))
        est = NeighborEmbedding2D(n_neighbors=8, n_epochs=50, seed=1)
        coords = est.fit_transform(X)
        assert coords.shape == (40, 2)
        assert np.array_equal(coords, est.embedding_)

    def test_no_out_of_sample_transform(self):
        est = NeighborEmbedding2D()
        with pytest.raises(ContractError):
            est.transform(np.ones((3, 2)))

    def test_clone_keeps_params(self):
        est = NeighborEmbedding2D(n_neighbors=11, min_dist=0.7)
        assert clone(est).get_params()["n_neighbors"] == 11


class TestLeidenClustering:
    def test_fit_predict_blobs(self):
        rng = np.random.default_rng(2)
        X = np.vstack([rng.normal(0, 0.3, (30, 2)), rng.normal(8, 0.3, (30, 2))])
        est = LeidenClustering(n_neighbors=10, resolution=0.3, seed=0)
        labels = est.fit_predict(X)
        assert labels.shape == (60,)
        # clusters never straddle the gap; finer within-blob splits are fine
        blob = np.repeat([0, 1], 30)
        for cid in np.unique(labels):
            assert np.unique(blob[labels == cid]).size == 1
        assert labels[0] != labels[45]
        assert est.quality_ > 0

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(50, 3))
        a = LeidenClustering(n_neighbors=8, seed=4).fit_predict(X)
        b = LeidenClustering(n_neighbors=8, seed=4).fit_predict(X)
        assert np.array_equal(a, b)
