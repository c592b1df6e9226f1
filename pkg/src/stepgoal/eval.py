"""Cross-validation, per-hour sweeps, grid search and report emission."""
from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from joblib import Parallel, delayed

from .exceptions import TooFewRows, UnsupportedKernel
from .features import FeatureConfig, FeatureMatrix, Standardizer, build_matrix
from .models import Lasso, LinearSVM, MajorityClass, NearestCentroid, RandomizedTrees
from .models._base import accuracy, r2_score

FAMILIES = {
    "svm": (LinearSVM, "accuracy"),
    "centroid": (NearestCentroid, "accuracy"),
    "trees": (RandomizedTrees, "accuracy"),
    "majority": (MajorityClass, "accuracy"),
    "lasso": (Lasso, "r2"),
}


@dataclass(frozen=True)
class ModelSpec:
    family: str
    params: tuple[tuple[str, Any], ...] = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}; expected one of {sorted(FAMILIES)}")
        if isinstance(self.params, Mapping):
            object.__setattr__(self, "params", tuple(self.params.items()))

    @classmethod
    def of(cls, family: str, **params) -> ModelSpec:
        return cls(family, tuple(params.items()))

    @property
    def metric(self) -> str:
        return FAMILIES[self.family][1]

    def build(self):
        return FAMILIES[self.family][0](**dict(self.params))

    def summary(self) -> str:
        return ";".join(f"{k}={v}" for k, v in self.params)

    def to_dict(self) -> dict:
        return {"family": self.family, "params": dict(self.params)}


@dataclass(frozen=True)
class FoldSpec:
    n_rows: int
    k: int
    assignment: tuple[int, ...]
    shuffled: bool = False
    seed: int | None = None
    grouped: bool = False

    def sizes(self) -> list[int]:
        return np.bincount(np.asarray(self.assignment, dtype=int), minlength=self.k).tolist()

    def splits(self):
        a = np.asarray(self.assignment)
        for f in range(self.k):
            yield np.flatnonzero(a != f), np.flatnonzero(a == f)


def kfold(n_rows: int, k: int = 5, shuffled: bool = False, seed: int | None = None) -> FoldSpec:
    """Contiguous folds; the first ``n_rows % k`` folds take one extra row.

    With ``shuffled`` the same block layout is applied to a seeded permutation.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if n_rows < k:
        raise TooFewRows(f"{n_rows} rows cannot fill {k} folds")
    base, extra = divmod(n_rows, k)
    sizes = [base + (f < extra) for f in range(k)]
    blocks = np.repeat(np.arange(k), sizes)
    if shuffled:
        assignment = np.empty(n_rows, dtype=int)
        assignment[np.random.default_rng(seed).permutation(n_rows)] = blocks
    else:
        assignment = blocks
    return FoldSpec(n_rows, k, tuple(int(a) for a in assignment), shuffled, seed)


def group_kfold(groups: Sequence[str], k: int = 5, shuffled: bool = False,
                seed: int | None = None) -> FoldSpec:
    """Folds that keep every group (user) whole; fold sizes may then differ by more than one."""
    names = sorted(set(groups))
    if len(names) < k:
        raise TooFewRows(f"{len(names)} groups cannot fill {k} folds")
    group_fold = kfold(len(names), k, shuffled, seed).assignment
    lookup = dict(zip(names, group_fold))
    return FoldSpec(len(groups), k, tuple(lookup[g] for g in groups), shuffled, seed, grouped=True)


@dataclass(frozen=True)
class CVReport:
    model_spec: ModelSpec
    cutoff_hour: int | None
    fold_scores: tuple[float, ...]
    mean_score: float
    metric: str = "accuracy"
    degenerate_folds: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "model": self.model_spec.to_dict(),
            "cutoff_hour": self.cutoff_hour,
            "metric": self.metric,
            "fold_scores": list(self.fold_scores),
            "mean_score": self.mean_score,
            "degenerate_folds": list(self.degenerate_folds),
        }


def _score_fold(X, y_class, y_reg, skip, spec: ModelSpec, train, test, standardize: bool):
    if standardize and len(train) >= 2:
        scaler = Standardizer(skip=skip).fit(X[train])
        Xtr, Xte = scaler.transform(X[train]), scaler.transform(X[test])
    else:
        Xtr, Xte = X[train], X[test]
    if spec.metric == "r2":
        model = spec.build().fit(Xtr, y_reg[train])
        return r2_score(y_reg[test], model.predict(Xte)), False
    if len(np.unique(y_class[train])) < 2:
        baseline = MajorityClass().fit(Xtr, y_class[train])
        return accuracy(y_class[test], baseline.predict(Xte)), True
    model = spec.build().fit(Xtr, y_class[train])
    return accuracy(y_class[test], model.predict(Xte)), False


def cv_score(matrix: FeatureMatrix, model_spec: ModelSpec, folds: FoldSpec,
             standardize: bool = True, n_jobs: int = 1) -> CVReport:
    """Fit scaling and model on each training split; score the held-out fold.

    A training split holding a single class is scored with the majority-class
    baseline and its fold index is listed in ``degenerate_folds``.
    """
    if len(matrix) != folds.n_rows:
        raise ValueError(f"matrix has {len(matrix)} rows but folds cover {folds.n_rows}")
    X, yc, yr = matrix.X, matrix.y_class, matrix.y_reg
    skip = np.asarray(matrix.indicator_columns, bool)
    args = [(X, yc, yr, skip, model_spec, tr, te, standardize) for tr, te in folds.splits()]
    if n_jobs == 1:
        results = [_score_fold(*a) for a in args]
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(_score_fold)(*a) for a in args)
    scores = tuple(float(s) for s, _ in results)
    degenerate = tuple(f for f, (_, flag) in enumerate(results) if flag)
    return CVReport(model_spec, matrix.config.cutoff_hour, scores, float(np.mean(scores)),
                    model_spec.metric, degenerate)


def fingerprint(matrix: FeatureMatrix) -> dict:
    y = matrix.y_class
    return {
        "n_rows": len(matrix),
        "n_users": len(set(matrix.user_ids)),
        "n_columns": len(matrix.column_names),
        "positive_rate": float(y.mean()) if len(y) else None,
        "dropped_insufficient_history": matrix.diagnostics.get("insufficient_history", 0),
    }


@dataclass
class SweepReport:
    rows: list[CVReport]
    fingerprints: dict[int, dict]
    config: dict

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "fingerprints": {str(h): fp for h, fp in sorted(self.fingerprints.items())},
            "rows": [r.to_dict() for r in self.rows],
        }


def _folds_for(matrix: FeatureMatrix, k: int, shuffled: bool, seed, group_by_user: bool) -> FoldSpec:
    if group_by_user:
        return group_kfold(matrix.user_ids, k, shuffled, seed)
    return kfold(len(matrix), k, shuffled, seed)


def hourly_sweep(days, profiles, hours: Iterable[int], model_specs: Sequence[ModelSpec],
                 config: FeatureConfig, k: int = 5, shuffled: bool = False, seed: int | None = None,
                 group_by_user: bool = False, standardize: bool = True, n_jobs: int = 1) -> SweepReport:
    """Cross-validate every model spec at every cutoff hour.

    Rows come out ordered by hour, then by position in ``model_specs``.
    """
    hours = sorted(set(hours))
    if any(not 0 <= h <= 23 for h in hours):
        raise ValueError("hours must lie in 0..23")
    days = list(days)
    echo = {
        "hours": hours,
        "models": [s.to_dict() for s in model_specs],
        "features": config.to_dict(),
        "k": k, "shuffled": shuffled, "seed": seed,
        "group_by_user": group_by_user, "standardize": standardize,
    }
    cells = []
    prints = {}
    for h in hours:
        matrix = build_matrix(days, profiles, config.with_cutoff(h))
        folds = _folds_for(matrix, k, shuffled, seed, group_by_user)
        prints[h] = fingerprint(matrix)
        cells += [(matrix, spec, folds) for spec in model_specs]
    if n_jobs == 1:
        rows = [cv_score(m, s, f, standardize) for m, s, f in cells]
    else:
        rows = Parallel(n_jobs=n_jobs)(delayed(cv_score)(m, s, f, standardize) for m, s, f in cells)
    return SweepReport(list(rows), prints, echo)


# tie-break direction: -1 means a smaller value regularises more
_REGULARISATION = {"svm": ("C", -1), "centroid": ("shrink_threshold", 1), "lasso": ("alpha", 1)}


def _strength(spec: ModelSpec) -> float:
    name, direction = _REGULARISATION.get(spec.family, (None, 0))
    value = dict(spec.params).get(name)
    if name is None:
        return 0.0
    if value is None:
        value = 0.0 if spec.family == "centroid" else {"svm": 1.0, "lasso": 1.0}[spec.family]
    return direction * float(value)


@dataclass
class GridResult:
    best: ModelSpec
    best_report: CVReport
    table: list[CVReport]
    rejected: list[tuple[ModelSpec, str]] = field(default_factory=list)


def grid_search(matrix: FeatureMatrix, family: str, grid: Mapping[str, Sequence], folds: FoldSpec,
                base_params: Mapping | None = None, standardize: bool = True,
                n_jobs: int = 1) -> GridResult:
    """Exhaustive search; the best cell has the highest mean score.

    Ties go to the more strongly regularised cell (smaller ``C``, larger
    ``shrink_threshold`` or ``alpha``), then to declaration order. Cells
    naming a declared-but-unimplemented kernel are listed in ``rejected``.
    """
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("grid must name at least one value per parameter")
    names = list(grid)
    specs = []
    for values in itertools.product(*(grid[n] for n in names)):
        params = dict(base_params or {})
        params.update(zip(names, values))
        specs.append(ModelSpec(family, tuple(params.items())))

    def run(spec):
        try:
            return cv_score(matrix, spec, folds, standardize)
        except UnsupportedKernel as exc:
            return str(exc)

    if n_jobs == 1:
        outcomes = [run(s) for s in specs]
    else:
        outcomes = Parallel(n_jobs=n_jobs)(delayed(run)(s) for s in specs)
    table = [o for o in outcomes if isinstance(o, CVReport)]
    rejected = [(s, o) for s, o in zip(specs, outcomes) if isinstance(o, str)]
    if not table:
        raise UnsupportedKernel("no grid cell could be evaluated")
    order = {id(r): i for i, r in enumerate(table)}
    best = min(table, key=lambda r: (-r.mean_score, -_strength(r.model_spec), order[id(r)]))
    return GridResult(best.model_spec, best, table, rejected)


# -- reports ----------------------------------------------------------------

def report_csv(rows: Sequence[CVReport]) -> str:
    """``hour,model,param_summary,fold1..foldK,mean`` with 8-decimal floats."""
    k = max((len(r.fold_scores) for r in rows), default=5)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["hour", "model", "param_summary", *(f"fold{i + 1}" for i in range(k)), "mean"])
    for r in rows:
        writer.writerow([
            "" if r.cutoff_hour is None else r.cutoff_hour,
            r.model_spec.family,
            r.model_spec.summary(),
            *(f"{s:.8f}" for s in r.fold_scores),
            f"{r.mean_score:.8f}",
        ])
    return out.getvalue()


def curve_csv(rows: Sequence[CVReport]) -> str:
    """Wide table of mean score by hour, one column per model, for plotting."""
    labels = []
    for r in rows:
        label = r.model_spec.family + (f"[{r.model_spec.summary()}]" if r.model_spec.params else "")
        if label not in labels:
            labels.append(label)
    table: dict[int, dict[str, float]] = {}
    for r in rows:
        label = r.model_spec.family + (f"[{r.model_spec.summary()}]" if r.model_spec.params else "")
        table.setdefault(r.cutoff_hour, {})[label] = r.mean_score
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["hour", *labels])
    for hour in sorted(table):
        writer.writerow([hour, *(f"{table[hour][l]:.8f}" if l in table[hour] else "" for l in labels)])
    return out.getvalue()


def report_json(report: SweepReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=1) + "\n"
