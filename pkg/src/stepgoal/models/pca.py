"""Principal components by power iteration with deflation."""
from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..exceptions import DegenerateInput, TooFewRows
from ._base import check_x, decode_array, encode_array


class PCA(TransformerMixin, BaseEstimator):
    """Top principal components of the sample covariance.

    Each component is found by power iteration on the covariance matrix,
    re-orthogonalised against the components already found on every step.
    Iteration stops once the eigen-residual ``||Cv - lambda v||`` falls
    below ``tol`` times the largest eigenvalue.

    Parameters
    ----------
    n_components : int
        Clamped to ``min(n_rows - 1, n_features)`` with a warning.
    tol : float
    max_iter : int
        Cap on power iterations per component.
    random_state : int
        Seed of the starting vectors.
    """

    def __init__(self, n_components=10, tol=1e-10, max_iter=200_000, random_state=0):
        self.n_components = n_components
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-D, got shape {X.shape}")
        n, d = X.shape
        if n < 2:
            raise TooFewRows("PCA needs at least 2 rows")
        k = self.n_components
        limit = min(n - 1, d)
        if k > limit:
            warnings.warn(f"n_components={k} clamped to {limit}", stacklevel=2)
            k = limit
        self.mean_ = X.mean(axis=0)
        Xc = X - self.mean_
        cov = Xc.T @ Xc / (n - 1)
        total = float(np.trace(cov))
        if total <= 0.0:
            raise DegenerateInput("all rows are identical")

        rng = np.random.default_rng(self.random_state)
        scale = np.abs(cov).sum(axis=1).max()  # bounds the top eigenvalue
        components = np.zeros((k, d))
        variances = np.zeros(k)
        iterations = np.zeros(k, dtype=int)
        for i in range(k):
            basis = components[:i]
            v = rng.standard_normal(d)
            v -= basis.T @ (basis @ v)
            v /= np.linalg.norm(v)
            lam = 0.0
            for it in range(1, self.max_iter + 1):
                w = cov @ v
                w -= basis.T @ (basis @ w)
                lam = float(v @ w)
                if np.linalg.norm(w - lam * v) <= self.tol * scale:
                    break
                norm = np.linalg.norm(w)
                if norm <= self.tol * scale:
                    # remaining spectrum is numerically zero; any orthogonal direction will do
                    lam = 0.0
                    break
                v = w / norm
            # one more projection keeps the basis orthonormal to rounding
            v -= basis.T @ (basis @ v)
            v /= np.linalg.norm(v)
            if v[np.argmax(np.abs(v))] < 0:
                v = -v
            components[i] = v
            variances[i] = max(float(v @ cov @ v), 0.0)
            iterations[i] = it

        order = np.argsort(-variances, kind="stable")
        self.components_ = components[order]
        self.explained_variance_ = variances[order]
        self.explained_variance_ratio_ = self.explained_variance_ / total
        self.total_variance_ = total
        self.n_iter_ = iterations[order]
        self.n_components_ = k
        self.n_features_in_ = d
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        return (check_x(X, self.n_features_in_) - self.mean_) @ self.components_.T

    def inverse_transform(self, Z):
        check_is_fitted(self, "components_")
        return np.asarray(Z, dtype=float) @ self.components_ + self.mean_

    def to_dict(self) -> dict:
        check_is_fitted(self, "components_")
        return {
            "type": "pca",
            "params": self.get_params(),
            "components": encode_array(self.components_),
            "explained_variance": encode_array(self.explained_variance_),
            "total_variance": float(self.total_variance_).hex(),
            "mean": encode_array(self.mean_),
            "n_iter": [int(i) for i in self.n_iter_],
        }

    @classmethod
    def from_dict(cls, data: dict) -> PCA:
        model = cls(**data["params"])
        model.components_ = decode_array(data["components"])
        model.explained_variance_ = decode_array(data["explained_variance"])
        model.total_variance_ = float.fromhex(data["total_variance"])
        model.explained_variance_ratio_ = model.explained_variance_ / model.total_variance_
        model.mean_ = decode_array(data["mean"])
        model.n_iter_ = np.array(data["n_iter"], dtype=int)
        model.n_components_, model.n_features_in_ = model.components_.shape
        return model


def pca_fit(X, n_components=10, random_state=0) -> PCA:
    return PCA(n_components=n_components, random_state=random_state).fit(X)
