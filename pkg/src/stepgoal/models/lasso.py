"""L1-penalised least squares by cyclic coordinate descent."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._base import check_x, check_xy, decode_array, encode_array, r2_score


def soft_threshold(z: float, t: float) -> float:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


class Lasso(RegressorMixin, BaseEstimator):
    """Minimises ``(1/2n)||y - Xw - b||^2 + alpha ||w||_1``.

    The intercept is unpenalised and is solved exactly by centring. Sweeps
    stop when no coordinate moves by ``tol`` or more, or after ``max_iter``
    sweeps.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    intercept_ : float
    n_iter_ : int
        Number of full sweeps run.
    converged_ : bool
    """

    def __init__(self, alpha=1.0, max_iter=1000, tol=1e-6):
        self.alpha = alpha
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        X, y = check_xy(X, y)
        y = y.astype(float)
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        n, d = X.shape
        x_mean = X.mean(axis=0)
        y_mean = y.mean()
        Xc = X - x_mean
        r = y - y_mean  # residual of the centred problem at w = 0
        col_sq = (Xc ** 2).sum(axis=0) / n
        w = np.zeros(d)
        converged = False
        sweeps = 0
        for sweeps in range(1, self.max_iter + 1):
            max_change = 0.0
            for j in range(d):
                if col_sq[j] == 0.0:
                    continue
                xj = Xc[:, j]
                rho = xj @ r / n + col_sq[j] * w[j]
                new = soft_threshold(rho, self.alpha) / col_sq[j]
                delta = new - w[j]
                if delta != 0.0:
                    r -= delta * xj
                    w[j] = new
                    max_change = max(max_change, abs(delta))
            if max_change < self.tol:
                converged = True
                break
        self.coef_ = w
        self.intercept_ = float(y_mean - x_mean @ w)
        self.n_iter_ = sweeps
        self.converged_ = converged
        self.n_features_in_ = d
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return check_x(X, self.n_features_in_) @ self.coef_ + self.intercept_

    def score(self, X, y, sample_weight=None):
        return r2_score(y, self.predict(X))

    def objective(self, X, y) -> float:
        check_is_fitted(self, "coef_")
        X, y = check_xy(X, y)
        r = y - X @ self.coef_ - self.intercept_
        return float(r @ r / (2 * len(y)) + self.alpha * np.abs(self.coef_).sum())

    def to_dict(self) -> dict:
        check_is_fitted(self, "coef_")
        return {
            "type": "lasso",
            "params": self.get_params(),
            "coef": encode_array(self.coef_),
            "intercept": float(self.intercept_).hex(),
            "n_iter": self.n_iter_,
            "converged": self.converged_,
        }

    @classmethod
    def from_dict(cls, data: dict) -> Lasso:
        model = cls(**data["params"])
        model.coef_ = decode_array(data["coef"])
        model.intercept_ = float.fromhex(data["intercept"])
        model.n_iter_ = data["n_iter"]
        model.converged_ = data["converged"]
        model.n_features_in_ = model.coef_.shape[0]
        return model


def lasso_fit(X, y, alpha=1.0, max_iter=1000, tol=1e-6) -> Lasso:
    return Lasso(alpha=alpha, max_iter=max_iter, tol=tol).fit(X, y)
