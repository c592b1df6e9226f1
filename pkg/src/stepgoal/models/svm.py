"""Linear soft-margin SVM solved in the dual by coordinate descent."""
from __future__ import annotations

import math

import numba
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..exceptions import UnsupportedKernel
from ._base import binary_classes, check_x, check_xy, decode_array, encode_array, encode_labels

KERNELS = ("linear", "rbf", "poly")
BIAS_MODES = ("augment", "free_sv")


@numba.njit(cache=True)
def _epoch(X, y, alpha, w, qd, C, index, active, pg_max_old, pg_min_old):
    """One pass over ``index[:active]``; may shrink the active set in place."""
    pg_max = -np.inf
    pg_min = np.inf
    d = X.shape[1]
    s = 0
    while s < active:
        i = index[s]
        g = 0.0
        for j in range(d):
            g += w[j] * X[i, j]
        g = y[i] * g - 1.0
        pg = 0.0
        if alpha[i] == 0.0:
            if g > pg_max_old:
                active -= 1
                index[s], index[active] = index[active], index[s]
                continue
            if g < 0.0:
                pg = g
        elif alpha[i] == C:
            if g < pg_min_old:
                active -= 1
                index[s], index[active] = index[active], index[s]
                continue
            if g > 0.0:
                pg = g
        else:
            pg = g
        if pg > pg_max:
            pg_max = pg
        if pg < pg_min:
            pg_min = pg
        if abs(pg) > 1e-12:
            old = alpha[i]
            if qd[i] > 0.0:
                new = min(max(old - g / qd[i], 0.0), C)
            else:
                # zero row: the dual is linear in alpha_i with slope 1
                new = C
            alpha[i] = new
            step = (new - old) * y[i]
            if step != 0.0:
                for j in range(d):
                    w[j] += step * X[i, j]
        s += 1
    return active, pg_max, pg_min


@numba.njit(cache=True)
def _max_violation(X, y, alpha, w, C):
    worst = 0.0
    for i in range(X.shape[0]):
        g = y[i] * np.dot(w, X[i]) - 1.0
        if alpha[i] == 0.0:
            pg = min(g, 0.0)
        elif alpha[i] == C:
            pg = max(g, 0.0)
        else:
            pg = g
        if abs(pg) > worst:
            worst = abs(pg)
    return worst


def dual_objective(alpha, y, X) -> float:
    """``sum(alpha) - 0.5 ||sum_i alpha_i y_i x_i||^2``."""
    w = (alpha * y) @ X
    return float(alpha.sum() - 0.5 * w @ w)


class LinearSVM(ClassifierMixin, BaseEstimator):
    """Two-class soft-margin SVM with a linear kernel (L1 hinge loss).

    The dual ``max sum(a) - 1/2 ||sum a_i y_i x_i||^2, 0 <= a_i <= C`` is
    solved by coordinate descent over the multipliers, visiting them in a
    seeded random order each epoch, while maintaining the primal weights.
    ``shrinking`` drops multipliers stuck at a bound from the active set and
    restores the full set before declaring convergence.

    The intercept is handled by ``bias_mode``:

    ``"augment"``
        a constant column ``intercept_scaling`` is appended to every row, so
        the bias is learned (and regularised) like any other weight.
    ``"free_sv"``
        no bias during optimisation; afterwards ``b`` is the mean of
        ``y_i - w.x_i`` over free support vectors, or the midpoint of the
        KKT-feasible interval when there are none.

    Only ``kernel="linear"`` is implemented; ``"rbf"`` and ``"poly"`` raise
    :class:`UnsupportedKernel`.
    """

    def __init__(self, C=1.0, kernel="linear", max_epochs=1000, tol=1e-4, shrinking=True,
                 bias_mode="augment", intercept_scaling=1.0, random_state=0):
        self.C = C
        self.kernel = kernel
        self.max_epochs = max_epochs
        self.tol = tol
        self.shrinking = shrinking
        self.bias_mode = bias_mode
        self.intercept_scaling = intercept_scaling
        self.random_state = random_state

    def _design(self, X):
        if self.bias_mode == "augment":
            return np.hstack([X, np.full((X.shape[0], 1), float(self.intercept_scaling))])
        return X

    def fit(self, X, y):
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}; expected one of {KERNELS}")
        if self.kernel != "linear":
            raise UnsupportedKernel(f"kernel {self.kernel!r} is declared but not implemented")
        if self.bias_mode not in BIAS_MODES:
            raise ValueError(f"unknown bias_mode {self.bias_mode!r}")
        if not self.C > 0:
            raise ValueError("C must be positive")
        X, y = check_xy(X, y)
        classes, ys = binary_classes(y)
        Z = np.ascontiguousarray(self._design(X))
        n = Z.shape[0]
        C = float(self.C)
        qd = np.einsum("ij,ij->i", Z, Z)
        alpha = np.zeros(n)
        w = np.zeros(Z.shape[1])
        index = np.arange(n, dtype=np.int64)
        rng = np.random.default_rng(self.random_state)

        active = n
        pg_max_old, pg_min_old = math.inf, -math.inf
        converged = False
        epoch = 0
        for epoch in range(1, self.max_epochs + 1):
            index[:active] = index[:active][rng.permutation(active)]
            active, pg_max, pg_min = _epoch(Z, ys, alpha, w, qd, C, index, active,
                                            pg_max_old, pg_min_old)
            if max(pg_max, -pg_min) < self.tol:
                if active == n and _max_violation(Z, ys, alpha, w, C) < self.tol:
                    converged = True
                    break
                active = n
                pg_max_old, pg_min_old = math.inf, -math.inf
                continue
            if self.shrinking:
                pg_max_old = pg_max if pg_max > 0 else math.inf
                pg_min_old = pg_min if pg_min < 0 else -math.inf

        self.dual_coef_ = alpha
        self.dual_objective_ = float(alpha.sum() - 0.5 * w @ w)
        self.kkt_violation_ = float(_max_violation(Z, ys, alpha, w, C))
        self.n_iter_ = epoch
        self.converged_ = converged
        if self.bias_mode == "augment":
            self.coef_ = w[:-1].copy()
            self.intercept_ = float(w[-1] * self.intercept_scaling)
        else:
            self.coef_ = w.copy()
            self.intercept_ = _free_sv_bias(X, ys, alpha, w, C)
        self.classes_ = classes
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return check_x(X, self.n_features_in_) @ self.coef_ + self.intercept_

    def predict(self, X):
        # a score of exactly zero goes to the positive class
        return self.classes_[(self.decision_function(X) >= 0).astype(int)]

    def to_dict(self) -> dict:
        check_is_fitted(self, "coef_")
        return {
            "type": "svm",
            "params": self.get_params(),
            "seed": self.random_state,
            "classes": encode_labels(self.classes_),
            "coef": encode_array(self.coef_),
            "intercept": float(self.intercept_).hex(),
            "dual_coef": encode_array(self.dual_coef_),
            "dual_objective": float(self.dual_objective_).hex(),
            "kkt_violation": float(self.kkt_violation_).hex(),
            "n_iter": self.n_iter_,
            "converged": self.converged_,
        }

    @classmethod
    def from_dict(cls, data: dict) -> LinearSVM:
        model = cls(**data["params"])
        model.classes_ = np.array(data["classes"])
        model.coef_ = decode_array(data["coef"])
        model.intercept_ = float.fromhex(data["intercept"])
        model.dual_coef_ = decode_array(data["dual_coef"])
        model.dual_objective_ = float.fromhex(data["dual_objective"])
        model.kkt_violation_ = float.fromhex(data["kkt_violation"])
        model.n_iter_ = data["n_iter"]
        model.converged_ = data["converged"]
        model.n_features_in_ = model.coef_.shape[0]
        return model


def _free_sv_bias(X, ys, alpha, w, C) -> float:
    margins = X @ w
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        return float(np.mean(ys[free] - margins[free]))
    # y_i (w.x_i + b) >= 1 where alpha_i = 0, <= 1 where alpha_i = C
    lo, hi = -math.inf, math.inf
    for yi, m, a in zip(ys, margins, alpha):
        bound = yi - m  # the b at which y_i (w.x_i + b) == 1
        if (a == 0) == (yi > 0):
            lo = max(lo, bound)
        else:
            hi = min(hi, bound)
    if math.isinf(lo) and math.isinf(hi):
        return 0.0
    if math.isinf(lo):
        return hi
    if math.isinf(hi):
        return lo
    return 0.5 * (lo + hi)


def svm_fit(X, y, C=1.0, max_epochs=1000, tol=1e-4, shrinking=True, random_state=0) -> LinearSVM:
    return LinearSVM(C=C, max_epochs=max_epochs, tol=tol, shrinking=shrinking,
                     random_state=random_state).fit(X, y)


def svm_predict(model: LinearSVM, x):
    """Label of a single row; ``w.x + b == 0`` maps to the positive class."""
    return model.predict(np.asarray(x, dtype=float).reshape(1, -1))[0]
