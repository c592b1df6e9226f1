"""Majority-class baseline."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._base import check_xy, encode_labels


class MajorityClass(ClassifierMixin, BaseEstimator):
    """Always predicts the most frequent training label (first in sorted order on ties)."""

    def fit(self, X, y):
        X, y = check_xy(X, y)
        classes, counts = np.unique(y, return_counts=True)
        self.classes_ = classes
        self.majority_ = classes[np.argmax(counts)]
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "majority_")
        return np.full(len(X), self.majority_)

    def to_dict(self) -> dict:
        return {"type": "majority", "params": {}, "classes": encode_labels(self.classes_),
                "majority": encode_labels([self.majority_])[0]}

    @classmethod
    def from_dict(cls, data: dict) -> MajorityClass:
        model = cls()
        model.classes_ = np.array(data["classes"])
        model.majority_ = model.classes_[list(data["classes"]).index(data["majority"])]
        model.n_features_in_ = None
        return model
