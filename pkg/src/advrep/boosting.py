"""Gradient-boosted regression trees with logistic loss, from scratch.

Each boosting round fits a depth-limited regression tree to the negative
gradient of the log loss (the residual y - p); leaf values take the
standard one-step Newton update sum(r)/sum(p(1-p)). Multiclass targets are
handled one-vs-rest. Fitting is fully deterministic: exact greedy splits
with ties broken toward the lowest feature index and threshold.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .errors import ContractError, LabelError
from .validation import check_matrix

_HESSIAN_FLOOR = 1e-12


class RegressionTree:
    """Array-backed binary tree. Internal nodes split on value <= threshold."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def fit(self, X, gradient, hessian, max_depth: int, min_samples_leaf: int) -> "RegressionTree":
        X = np.asarray(X)
        self._build(X, gradient, hessian, np.arange(X.shape[0]), 0,
                    max_depth, min_samples_leaf)
        self.feature = np.asarray(self.feature, dtype=np.int64)
        self.threshold = np.asarray(self.threshold)
        self.left = np.asarray(self.left, dtype=np.int64)
        self.right = np.asarray(self.right, dtype=np.int64)
        self.value = np.asarray(self.value)
        return self

    def _leaf_value(self, gradient, hessian, rows) -> float:
        return float(gradient[rows].sum() / max(hessian[rows].sum(), _HESSIAN_FLOOR))

    def _build(self, X, gradient, hessian, rows, depth, max_depth, min_leaf) -> int:
        node = self._new_node()
        if depth >= max_depth or rows.size < 2 * min_leaf:
            self.value[node] = self._leaf_value(gradient, hessian, rows)
            return node
        split = self._best_split(X[rows], gradient[rows], min_leaf)
        if split is None:
            self.value[node] = self._leaf_value(gradient, hessian, rows)
            return node
        feat, threshold = split
        go_left = X[rows, feat] <= threshold
        self.feature[node] = feat
        self.threshold[node] = threshold
        left_id = self._build(X, gradient, hessian, rows[go_left], depth + 1,
                              max_depth, min_leaf)
        right_id = self._build(X, gradient, hessian, rows[~go_left], depth + 1,
                               max_depth, min_leaf)
        self.left[node] = left_id
        self.right[node] = right_id
        return node

    def _best_split(self, Xn, r, min_leaf):
        n, d = Xn.shape
        if n < 2:
            return None
        order = np.argsort(Xn, axis=0, kind="stable")
        xs = np.take_along_axis(Xn, order, axis=0)
        rs = r[order]
        prefix = np.cumsum(rs, axis=0)
        total = prefix[-1]
        counts = np.arange(1, n, dtype=np.float64)
        left_sum = prefix[:-1]
        right_sum = total - left_sum
        # squared-error gain relative to the parent, up to a constant
        gain = left_sum**2 / counts[:, None] + right_sum**2 / (n - counts)[:, None]
        valid = xs[:-1] < xs[1:]
        if min_leaf > 1:
            pos_ok = (counts >= min_leaf) & (n - counts >= min_leaf)
            valid &= pos_ok[:, None]
        base = total**2 / n
        gain = np.where(valid, gain - base, -np.inf)
        best_per_feature = gain.max(axis=0)
        feat = int(np.argmax(best_per_feature))
        if not np.isfinite(best_per_feature[feat]) or best_per_feature[feat] <= 1e-12:
            return None
        pos = int(np.argmax(gain[:, feat]))
        threshold = 0.5 * (xs[pos, feat] + xs[pos + 1, feat])
        return feat, threshold

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X)
        node = np.zeros(X.shape[0], dtype=np.int64)
        internal = self.feature[node] >= 0
        while internal.any():
            rows = np.flatnonzero(internal)
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
            internal = self.feature[node] >= 0
        return self.value[node]

    def features_used(self) -> set[int]:
        return set(int(fv) for fv in self.feature if fv >= 0)


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                    np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


class _PackedEnsemble:
    """All trees of one booster in flat arrays, descended simultaneously."""

    def __init__(self, intercept: float, trees: list[RegressionTree], lr: float):
        self.intercept = intercept
        self.lr = lr
        self.n_trees = len(trees)
        if not trees:
            return
        offsets = np.cumsum([0] + [len(t.feature) for t in trees])
        self.roots = offsets[:-1]
        self.feature = np.concatenate([t.feature for t in trees])
        self.threshold = np.concatenate([t.threshold for t in trees])
        self.left = np.concatenate(
            [np.where(t.left >= 0, t.left + off, -1) for t, off in zip(trees, offsets)]
        )
        self.right = np.concatenate(
            [np.where(t.right >= 0, t.right + off, -1) for t, off in zip(trees, offsets)]
        )
        self.value = np.concatenate([t.value for t in trees])

    def score(self, X: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        if self.n_trees == 0:
            return np.full(n, self.intercept)
        cur = np.broadcast_to(self.roots, (n, self.n_trees)).copy()
        rows = np.arange(n)[:, None]
        while True:
            feat = self.feature[cur]
            internal = feat >= 0
            if not internal.any():
                break
            go_left = np.zeros_like(internal)
            go_left[internal] = (
                X[np.broadcast_to(rows, cur.shape)[internal], feat[internal]]
                <= self.threshold[cur[internal]]
            )
            cur = np.where(internal, np.where(go_left, self.left[cur], self.right[cur]), cur)
        return self.intercept + self.lr * self.value[cur].sum(axis=1)


class GradientBoostedClassifier(BaseEstimator, ClassifierMixin):
    """Binary or one-vs-rest multiclass gradient boosting with logistic loss.

    n_rounds=0 degenerates to the constant class-prior predictor.
    """

    def __init__(self, learning_rate: float = 0.1, n_rounds: int = 100,
                 max_depth: int = 3, min_samples_leaf: int = 1):
        self.learning_rate = learning_rate
        self.n_rounds = n_rounds
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf

    def _fit_binary(self, X, y01):
        prior = float(np.clip(y01.mean(), 1e-12, 1 - 1e-12))
        intercept = float(np.log(prior / (1.0 - prior)))
        trees: list[RegressionTree] = []
        F = np.full(X.shape[0], intercept)
        for _ in range(self.n_rounds):
            p = _sigmoid(F)
            gradient = y01 - p
            hessian = p * (1.0 - p)
            tree = RegressionTree().fit(
                X, gradient, hessian, self.max_depth, self.min_samples_leaf
            )
            trees.append(tree)
            F = F + self.learning_rate * tree.predict(X)
        return intercept, trees

    def fit(self, X, y):
        X = check_matrix(X, "X")
        y = np.asarray(y)
        classes = np.unique(y)
        if classes.size < 2:
            raise LabelError(
                f"need at least 2 classes to fit, got {classes.size}"
            )
        if self.max_depth < 1:
            raise ContractError("max_depth must be >= 1")
        if self.n_rounds < 0:
            raise ContractError("n_rounds must be >= 0")
        self.classes_ = classes
        self.n_features_in_ = X.shape[1]
        self._models = []
        if classes.size == 2:
            y01 = (y == classes[1]).astype(np.float64)
            self._models.append(self._fit_binary(X, y01))
        else:
            for cls in classes:
                self._models.append(self._fit_binary(X, (y == cls).astype(np.float64)))
        # packed eagerly: scoring must stay read-only for parallel explainers
        self._packed = [
            _PackedEnsemble(intercept, trees, self.learning_rate)
            for intercept, trees in self._models
        ]
        return self

    def _check_fitted(self):
        if not hasattr(self, "_models"):
            raise NotFittedError(
                "this GradientBoostedClassifier instance is not fitted yet"
            )

    def decision_function(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_matrix(X, "X")
        scores = np.empty((X.shape[0], len(self._packed)))
        for i, packed in enumerate(self._packed):
            scores[:, i] = packed.score(X)
        return scores[:, 0] if len(self._packed) == 1 else scores

    def class_score(self, X, class_index: int) -> np.ndarray:
        """One-vs-rest sigmoid probability of one class; this is the target
        the attribution engines explain."""
        self._check_fitted()
        scores = self.decision_function(X)
        if scores.ndim == 1:
            p1 = _sigmoid(scores)
            return p1 if class_index == 1 else 1.0 - p1
        return _sigmoid(scores[:, class_index])

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        scores = self.decision_function(X)
        if scores.ndim == 1:
            p1 = _sigmoid(scores)
            return np.column_stack([1.0 - p1, p1])
        p = _sigmoid(scores)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def features_used(self) -> set[int]:
        self._check_fitted()
        used: set[int] = set()
        for _, trees in self._models:
            for tree in trees:
                used |= tree.features_used()
        return used
