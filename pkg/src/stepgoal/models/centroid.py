"""Nearest (shrunken) centroid classifier."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..exceptions import EmptyClass, EmptyInput, ZeroVector
from ._base import check_x, check_xy, decode_array, encode_array, encode_labels

METRICS = ("euclidean", "cosine", "manhattan")


def pairwise_distance(X: np.ndarray, centroids: np.ndarray, metric: str) -> np.ndarray:
    """Distances of shape (n_rows, n_centroids)."""
    if metric == "euclidean":
        diff = X[:, None, :] - centroids[None, :, :]
        return np.sqrt((diff ** 2).sum(axis=2))
    if metric == "manhattan":
        return np.abs(X[:, None, :] - centroids[None, :, :]).sum(axis=2)
    if metric == "cosine":
        xn = np.linalg.norm(X, axis=1)
        cn = np.linalg.norm(centroids, axis=1)
        if np.any(xn == 0):
            raise ZeroVector("cosine distance is undefined for a zero input vector")
        if np.any(cn == 0):
            raise ZeroVector("cosine distance is undefined for a zero centroid")
        return 1.0 - (X @ centroids.T) / np.outer(xn, cn)
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


class NearestCentroid(ClassifierMixin, BaseEstimator):
    """Assigns each row to the class with the closest mean.

    With ``shrink_threshold`` set, each class centroid's offset from the
    overall mean is expressed in units of ``m_k * (s_j + s_0)``, where ``s_j``
    is the pooled within-class standard deviation of feature ``j``, ``s_0``
    the median of the ``s_j`` and ``m_k = sqrt(1/n_k - 1/n)``. Offsets are
    soft-thresholded by ``shrink_threshold`` and mapped back. A threshold of
    zero is the identity and is skipped.

    Ties in distance go to the class listed first in ``classes_``.
    """

    def __init__(self, metric="euclidean", shrink_threshold=None):
        self.metric = metric
        self.shrink_threshold = shrink_threshold

    def fit(self, X, y):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}; expected one of {METRICS}")
        if self.shrink_threshold is not None and self.shrink_threshold < 0:
            raise ValueError("shrink_threshold must be non-negative")
        X, y = check_xy(X, y)
        classes, codes = np.unique(y, return_inverse=True)
        n, d = X.shape
        counts = np.bincount(codes, minlength=len(classes))
        if np.any(counts == 0):
            raise EmptyClass("every class needs at least one row")
        centroids = np.vstack([X[codes == k].mean(axis=0) for k in range(len(classes))])

        if self.shrink_threshold:
            overall = X.mean(axis=0)
            within = ((X - centroids[codes]) ** 2).sum(axis=0) / max(n - len(classes), 1)
            s = np.sqrt(within)
            s = s + np.median(s)
            m = np.sqrt(np.maximum(1.0 / counts - 1.0 / n, 0.0))
            ms = m[:, None] * s[None, :]
            safe = np.where(ms > 0, ms, 1.0)
            dev = np.where(ms > 0, (centroids - overall) / safe, 0.0)
            dev = np.sign(dev) * np.maximum(np.abs(dev) - self.shrink_threshold, 0.0)
            centroids = overall + ms * dev

        self.centroids_ = centroids
        self.classes_ = classes
        self.n_features_in_ = d
        return self

    def predict(self, X):
        check_is_fitted(self, "centroids_")
        X = check_x(X, self.n_features_in_)
        if X.shape[0] == 0:
            raise EmptyInput("no rows to predict")
        dist = pairwise_distance(X, self.centroids_, self.metric)
        return self.classes_[np.argmin(dist, axis=1)]

    def to_dict(self) -> dict:
        check_is_fitted(self, "centroids_")
        return {
            "type": "centroid",
            "params": self.get_params(),
            "classes": encode_labels(self.classes_),
            "centroids": encode_array(self.centroids_),
        }

    @classmethod
    def from_dict(cls, data: dict) -> NearestCentroid:
        model = cls(**data["params"])
        model.classes_ = np.array(data["classes"])
        model.centroids_ = decode_array(data["centroids"])
        model.n_features_in_ = model.centroids_.shape[1]
        return model


def centroid_fit(X, y_class, metric="euclidean", shrink_threshold=None) -> NearestCentroid:
    return NearestCentroid(metric=metric, shrink_threshold=shrink_threshold).fit(X, y_class)


def centroid_predict(model: NearestCentroid, x):
    """Class of the nearest centroid for a single row."""
    return model.predict(np.asarray(x, dtype=float).reshape(1, -1))[0]
