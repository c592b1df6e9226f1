"""Randomized (extra-trees style) classification ensemble with Gini importances."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..exceptions import SingleClass, TooFewRows
from ._base import check_x, check_xy, decode_array, encode_array, encode_labels

MIN_ROWS = 10


def gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - p @ p)


class _Tree:
    """Flat-array binary tree. Leaves have ``feature == -1``."""

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[np.ndarray] = []

    def add(self, counts) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(counts)
        return len(self.feature) - 1

    def predict_counts(self, X: np.ndarray) -> np.ndarray:
        out = np.empty((X.shape[0], len(self.value[0])))
        for i, x in enumerate(X):
            node = 0
            while self.feature[node] >= 0:
                node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
            out[i] = self.value[node]
        return out

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": [float(t).hex() for t in self.threshold],
            "left": self.left,
            "right": self.right,
            "value": [[int(c) for c in v] for v in self.value],
        }

    @classmethod
    def from_dict(cls, data: dict) -> _Tree:
        tree = cls()
        tree.feature = list(data["feature"])
        tree.threshold = [float.fromhex(t) for t in data["threshold"]]
        tree.left = list(data["left"])
        tree.right = list(data["right"])
        tree.value = [np.array(v, dtype=float) for v in data["value"]]
        return tree


def _grow(X, codes, n_classes, rng, max_features, importances) -> _Tree:
    n, d = X.shape
    tree = _Tree()
    root = tree.add(np.bincount(codes, minlength=n_classes).astype(float))
    stack = [(root, np.arange(n))]
    while stack:
        node, idx = stack.pop()
        counts = tree.value[node]
        if np.count_nonzero(counts) < 2:
            continue
        parent_gini = gini(counts)
        best = None  # (child impurity, feature, threshold)
        tried_useful = 0
        for j in rng.permutation(d):
            if tried_useful >= max_features:
                break
            col = X[idx, j]
            values = np.unique(col)
            if len(values) < 2:
                continue  # constant here; does not count towards max_features
            tried_useful += 1
            gap = rng.integers(len(values) - 1)
            thr = rng.uniform(values[gap], values[gap + 1])
            if thr >= values[gap + 1]:
                thr = values[gap]
            go_left = col <= thr
            lc = np.bincount(codes[idx[go_left]], minlength=n_classes)
            rc = counts - lc
            nl = lc.sum()
            child = (nl * gini(lc) + (len(idx) - nl) * gini(rc)) / len(idx)
            if best is None or child < best[0]:
                best = (child, j, thr, go_left)
        if best is None:
            continue  # every feature constant in this node
        child, j, thr, go_left = best
        importances[j] += len(idx) / n * (parent_gini - child)
        left_idx, right_idx = idx[go_left], idx[~go_left]
        tree.feature[node] = int(j)
        tree.threshold[node] = float(thr)
        left = tree.add(np.bincount(codes[left_idx], minlength=n_classes).astype(float))
        right = tree.add(np.bincount(codes[right_idx], minlength=n_classes).astype(float))
        tree.left[node], tree.right[node] = left, right
        stack.append((right, right_idx))
        stack.append((left, left_idx))
    return tree


class RandomizedTrees(ClassifierMixin, BaseEstimator):
    """Ensemble of fully grown randomized decision trees.

    At each node ``max_features`` candidate features are drawn; for each, a
    threshold is drawn uniformly inside a randomly chosen gap between
    consecutive distinct sorted values, and the candidate with the lowest
    weighted child Gini impurity wins. ``feature_importances_`` is the total
    weighted impurity decrease per feature over all trees, normalised to 1.
    """

    def __init__(self, n_estimators=10, max_features="sqrt", random_state=0):
        self.n_estimators = n_estimators
        self.max_features = max_features
        self.random_state = random_state

    def _n_candidates(self, d: int) -> int:
        if self.max_features == "sqrt":
            return max(1, int(np.sqrt(d)))
        if self.max_features is None:
            return d
        return max(1, min(d, int(self.max_features)))

    def fit(self, X, y):
        X, y = check_xy(X, y)
        if X.shape[0] < MIN_ROWS:
            raise TooFewRows(f"tree ensemble needs at least {MIN_ROWS} rows")
        classes, codes = np.unique(y, return_inverse=True)
        if len(classes) < 2:
            raise SingleClass("both classes must be present")
        rng = np.random.default_rng(self.random_state)
        raw = np.zeros(X.shape[1])
        k = self._n_candidates(X.shape[1])
        self.estimators_ = [_grow(X, codes, len(classes), rng, k, raw) for _ in range(self.n_estimators)]
        total = raw.sum()
        if total > 0:
            self.feature_importances_ = raw / total
        else:
            # no split was possible anywhere: rows identical across all features
            self.feature_importances_ = np.full(X.shape[1], 1.0 / X.shape[1])
        self.raw_importances_ = raw
        self.classes_ = classes
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "estimators_")
        X = check_x(X, self.n_features_in_)
        votes = np.zeros((X.shape[0], len(self.classes_)))
        for tree in self.estimators_:
            counts = tree.predict_counts(X)
            votes += counts / counts.sum(axis=1, keepdims=True)
        return votes / len(self.estimators_)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def to_dict(self) -> dict:
        check_is_fitted(self, "estimators_")
        return {
            "type": "trees",
            "params": self.get_params(),
            "seed": self.random_state,
            "classes": encode_labels(self.classes_),
            "importances": encode_array(self.feature_importances_),
            "raw_importances": encode_array(self.raw_importances_),
            "trees": [t.to_dict() for t in self.estimators_],
        }

    @classmethod
    def from_dict(cls, data: dict) -> RandomizedTrees:
        model = cls(**data["params"])
        model.classes_ = np.array(data["classes"])
        model.feature_importances_ = decode_array(data["importances"])
        model.raw_importances_ = decode_array(data["raw_importances"])
        model.estimators_ = [_Tree.from_dict(t) for t in data["trees"]]
        model.n_features_in_ = model.feature_importances_.shape[0]
        return model


def tree_importance(X, y_class, n_estimators=10, seed=0) -> RandomizedTrees:
    return RandomizedTrees(n_estimators=n_estimators, random_state=seed).fit(X, y_class)
