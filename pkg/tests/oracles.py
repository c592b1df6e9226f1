"""Independent reference solvers used only by the test-suite.

None of these share code with the package; each solves the same problem by a
different route.
"""
import math

import numpy as np


def lasso_objective(X, y, w, b, alpha):
    r = y - X @ w - b
    return r @ r / (2 * len(y)) + alpha * np.abs(w).sum()


def lasso_proximal_gradient(X, y, alpha, n_iter=1_000_000, step_fraction=0.5):
    """ISTA on the centred problem with a fixed step below 1/L.

    Stops early once the iterate stops moving at machine precision.
    """
    n = len(y)
    xm, ym = X.mean(axis=0), y.mean()
    Xc, yc = X - xm, y - ym
    L = np.linalg.norm(Xc, 2) ** 2 / n
    step = step_fraction / L if L > 0 else 1.0
    w = np.zeros(X.shape[1])
    for _ in range(n_iter):
        grad = Xc.T @ (Xc @ w - yc) / n
        z = w - step * grad
        new = np.sign(z) * np.maximum(np.abs(z) - step * alpha, 0.0)
        if np.max(np.abs(new - w)) <= 1e-15 * max(1.0, np.max(np.abs(w))):
            w = new
            break
        w = new
    return w, ym - xm @ w


def jacobi_eigenvalues(A, tol=1e-15, max_sweeps=100):
    """Cyclic Jacobi rotations for a symmetric matrix; eigenvalues descending."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(max_sweeps):
        off = math.sqrt(sum(A[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off <= tol * max(1.0, np.abs(A).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if A[p, q] == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * A[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q], J[q, p] = s, -s
                A = J.T @ A @ J
                V = V @ J
    vals = np.diag(A).copy()
    order = np.argsort(-vals)
    return vals[order], V[:, order]


def svm_dual_projected_gradient(Z, y, C, n_iter=200_000, tol=1e-13):
    """Accelerated projected-gradient ascent on the box-constrained dual.

    ``Z`` already carries any bias column. Returns the multipliers.
    """
    Q = (y[:, None] * Z) @ (y[:, None] * Z).T
    L = np.linalg.eigvalsh(Q)[-1]
    step = 1.0 / L
    a = np.zeros(len(y))
    v = a.copy()
    t = 1.0
    for _ in range(n_iter):
        grad = 1.0 - Q @ v
        new = np.clip(v + step * grad, 0.0, C)
        t_new = (1 + math.sqrt(1 + 4 * t * t)) / 2
        v = new + (t - 1) / t_new * (new - a)
        if np.max(np.abs(new - a)) < tol:
            a = new
            break
        # restart momentum when the objective would go down
        if (new - a) @ (1.0 - Q @ new) < 0:
            t_new = 1.0
            v = new
        a, t = new, t_new
    return a


def svm_dual_value(a, y, Z):
    w = (a * y) @ Z
    return a.sum() - 0.5 * w @ w


def nearest_centroid_bruteforce(X_train, y_train, X_test, metric):
    """Argmin over classes, classes in sorted order, first wins ties."""
    classes = sorted(set(y_train.tolist()))
    cents = []
    for c in classes:
        rows = [X_train[i] for i in range(len(y_train)) if y_train[i] == c]
        cents.append([sum(col) / len(rows) for col in zip(*rows)])
    out = []
    for x in X_test:
        best, best_d = None, None
        for c, m in zip(classes, cents):
            if metric == "euclidean":
                d = math.sqrt(sum((a - b) ** 2 for a, b in zip(x, m)))
            elif metric == "manhattan":
                d = sum(abs(a - b) for a, b in zip(x, m))
            else:
                dot = sum(a * b for a, b in zip(x, m))
                d = 1 - dot / (math.sqrt(sum(a * a for a in x)) * math.sqrt(sum(b * b for b in m)))
            if best_d is None or d < best_d:
                best, best_d = c, d
        out.append(best)
    return np.array(out)
