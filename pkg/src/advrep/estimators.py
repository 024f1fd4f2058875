"""sklearn-style estimator wrappers over the functional core, so the
algorithms compose with pipelines, clone(), and grid search."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, ClusterMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .boosting import GradientBoostedClassifier  # noqa: F401  (re-export)
from .embedding import effective_neighbors, embed_2d
from .errors import ContractError
from .graph import knn_graph, leiden
from .nn import CAPTURE_LAYERS, capture_activations, predict_probabilities
from .training import (
    DannConfig,
    TrainConfig,
    run_training_with_snapshots,
)
from .validation import check_labels, check_matrix


class DannClassifier(BaseEstimator, ClassifierMixin):
    """Adversarially trained label classifier.

    fit(X, y, domain) trains the three-branch network on an 80/20
    label-stratified split; predict/predict_proba expose the label head,
    predict_domain the adversarial head, and transform() returns hidden
    activations so the estimator can stand in as a feature extractor.
    """

    def __init__(self, hidden_dim=64, dropout_p=0.1, leaky_slope=0.01,
                 grl_lambda=0.01, lr=0.01, beta1=0.9, beta2=0.99,
                 weight_decay=0.01, batch_size=32, epochs=150, seed=0):
        self.hidden_dim = hidden_dim
        self.dropout_p = dropout_p
        self.leaky_slope = leaky_slope
        self.grl_lambda = grl_lambda
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr, beta1=self.beta1, beta2=self.beta2,
            weight_decay=self.weight_decay, grl_lambda=self.grl_lambda,
            batch_size=self.batch_size, epochs=self.epochs, seed=self.seed,
        )

    def fit(self, X, y, domain):
        from .data import Dataset

        X = check_matrix(X, "X")
        y = check_labels(y, X.shape[0], "y")
        domain = check_labels(domain, X.shape[0], "domain")
        dataset = Dataset(
            X=X, domain=domain, label=y,
            feature_names=[f"g{j:04d}" for j in range(X.shape[1])],
            sample_ids=[f"s{i:04d}" for i in range(X.shape[0])],
        )
        cfg = self._train_config()
        dann_cfg = DannConfig(
            input_dim=dataset.n_features,
            n_domains=dataset.n_domains,
            hidden_dim=self.hidden_dim,
            dropout_p=self.dropout_p,
            leaky_slope=self.leaky_slope,
            grl_lambda=self.grl_lambda,
        )
        record = run_training_with_snapshots(dataset, cfg, [], dann_cfg)
        self.params_ = record.params
        self.records_ = record.records
        self.classes_ = np.unique(y)
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("this DannClassifier instance is not fitted yet")

    def predict_proba(self, X):
        self._check_fitted()
        label_prob, _ = predict_probabilities(self.params_, check_matrix(X, "X"))
        return np.column_stack([1.0 - label_prob, label_prob])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    def predict_domain_proba(self, X):
        self._check_fitted()
        _, domain_prob = predict_probabilities(self.params_, check_matrix(X, "X"))
        return domain_prob

    def predict_domain(self, X):
        return np.argmax(self.predict_domain_proba(X), axis=1)

    def transform(self, X, layer: str = "feature_extractor.dropout1"):
        self._check_fitted()
        if layer not in CAPTURE_LAYERS:
            raise ContractError(
                f"unknown layer {layer!r}; valid ids: {list(CAPTURE_LAYERS)}"
            )
        return capture_activations(self.params_, X, (layer,))[0].values


class NeighborEmbedding2D(BaseEstimator, TransformerMixin):
    """2-D neighbor embedding with fit_transform semantics (no out-of-sample
    transform, like other neighbor-layout methods)."""

    def __init__(self, n_neighbors=30, min_dist=0.3, n_epochs=200, seed=0):
        self.n_neighbors = n_neighbors
        self.min_dist = min_dist
        self.n_epochs = n_epochs
        self.seed = seed

    def fit(self, X, y=None):
        result = embed_2d(
            X, n_neighbors=self.n_neighbors, min_dist=self.min_dist,
            epochs=self.n_epochs, seed=self.seed,
        )
        self.embedding_ = result.coords
        self.provenance_ = result.provenance
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X).embedding_

    def transform(self, X):
        raise ContractError(
            "NeighborEmbedding2D has no out-of-sample transform; use fit_transform"
        )


class LeidenClustering(BaseEstimator, ClusterMixin):
    """k-NN graph construction plus Leiden community detection."""

    def __init__(self, n_neighbors=400, resolution=0.3, seed=0):
        self.n_neighbors = n_neighbors
        self.resolution = resolution
        self.seed = seed

    def fit(self, X, y=None):
        X = check_matrix(X, "X")
        k = effective_neighbors(self.n_neighbors, X.shape[0])
        graph = knn_graph(X, k)
        assignment = leiden(graph, self.resolution, seed=self.seed)
        self.graph_ = graph
        self.labels_ = assignment.ids
        self.quality_ = assignment.quality
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_
