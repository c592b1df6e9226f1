"""From-scratch estimators with scikit-learn compatible interfaces."""
import json

from ._base import accuracy, r2_score
from .centroid import NearestCentroid, centroid_fit, centroid_predict
from .lasso import Lasso, lasso_fit
from .majority import MajorityClass
from .pca import PCA, pca_fit
from .svm import LinearSVM, svm_fit, svm_predict
from .trees import RandomizedTrees, tree_importance

MODEL_TYPES = {
    "lasso": Lasso,
    "pca": PCA,
    "trees": RandomizedTrees,
    "centroid": NearestCentroid,
    "svm": LinearSVM,
    "majority": MajorityClass,
}


def model_to_dict(model) -> dict:
    return model.to_dict()


def model_from_dict(data: dict):
    try:
        cls = MODEL_TYPES[data["type"]]
    except KeyError as exc:
        raise ValueError(f"unknown model type {data.get('type')!r}") from exc
    return cls.from_dict(data)


def dumps_model(model) -> str:
    return json.dumps(model.to_dict(), sort_keys=True, indent=1) + "\n"


def loads_model(text: str):
    return model_from_dict(json.loads(text))


__all__ = [
    "Lasso", "PCA", "RandomizedTrees", "NearestCentroid", "LinearSVM", "MajorityClass",
    "lasso_fit", "pca_fit", "tree_importance", "centroid_fit", "centroid_predict",
    "svm_fit", "svm_predict", "r2_score", "accuracy",
    "model_to_dict", "model_from_dict", "dumps_model", "loads_model",
]
