"""Helpers shared by the estimators: metrics, label handling, JSON payloads."""
from __future__ import annotations

import numpy as np

from ..exceptions import ConstantTarget, DimensionMismatch, EmptyInput, NonBinaryLabels, SingleClass


def r2_score(y_true, y_pred) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot. May be negative."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise DimensionMismatch(f"{y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise EmptyInput("r2_score of an empty sample")
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        raise ConstantTarget("R^2 is undefined for a constant target")
    return 1.0 - float(np.sum((y_true - y_pred) ** 2)) / ss_tot


def accuracy(y_true, y_pred) -> float:
    y_true = np.asarray(y_true)
    if y_true.size == 0:
        raise EmptyInput("accuracy of an empty sample")
    return float(np.mean(y_true == np.asarray(y_pred)))


def check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise DimensionMismatch(f"X must be 2-D, got shape {X.shape}")
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise EmptyInput("X has no rows or no columns")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"y of shape {y.shape} does not match {X.shape[0]} rows")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains NaN or infinite values")
    return X, y


def check_x(X, n_features: int):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise DimensionMismatch(f"expected {n_features} features, got shape {X.shape}")
    return X


def binary_classes(y):
    """Sorted classes and a +/-1 coding where ``classes[1]`` maps to +1."""
    classes, inv = np.unique(y, return_inverse=True)
    if len(classes) < 2:
        raise SingleClass("both classes must be present")
    if len(classes) > 2:
        raise NonBinaryLabels(f"expected 2 classes, got {len(classes)}")
    return classes, np.where(inv == 1, 1.0, -1.0)


def encode_array(a) -> dict:
    """Lossless JSON payload for a float array (hex floats)."""
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "hex": [float(v).hex() for v in a.ravel()]}


def decode_array(payload: dict) -> np.ndarray:
    values = np.array([float.fromhex(h) for h in payload["hex"]], dtype=float)
    return values.reshape(payload["shape"])


def encode_labels(classes) -> list:
    return [c.item() if hasattr(c, "item") else c for c in classes]
