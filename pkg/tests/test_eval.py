import datetime as dt
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stepgoal.bucketing import bucket_day
from stepgoal.eval import (
    ModelSpec,
    cv_score,
    curve_csv,
    grid_search,
    group_kfold,
    hourly_sweep,
    kfold,
    report_csv,
    report_json,
)
from stepgoal.exceptions import TooFewRows
from stepgoal.features import FeatureConfig, FeatureMatrix, FeatureRow, build_matrix
from stepgoal.synth import CohortSpec, generate_cohort

D0 = dt.date(2015, 3, 2)


def matrix(X, y, y_reg=None):
    X = np.asarray(X, float)
    y_reg = np.zeros(len(y)) if y_reg is None else y_reg
    rows = [FeatureRow(f"u{i % 4}", D0 + dt.timedelta(days=i), x, bool(c), float(r))
            for i, (x, c, r) in enumerate(zip(X, y, y_reg))]
    return FeatureMatrix(rows, tuple(f"c{j}" for j in range(X.shape[1])), FeatureConfig())


@pytest.fixture(scope="module")
def small_cohort():
    cohort = generate_cohort(CohortSpec(n_users=12, n_days=20, seed=3))
    days = [bucket_day(r) for r in cohort.records]
    return days, {p.user_id: p for p in cohort.profiles}


# -- folds ------------------------------------------------------------------

def test_kfold_examples():
    f = kfold(10, 5)
    assert f.sizes() == [2, 2, 2, 2, 2]
    assert f.assignment[:2] == (0, 0)
    assert kfold(11, 5).sizes() == [3, 2, 2, 2, 2]
    assert kfold(40, 5, shuffled=True, seed=4) == kfold(40, 5, shuffled=True, seed=4)
    assert kfold(40, 5, shuffled=True, seed=4).assignment != kfold(40, 5).assignment
    with pytest.raises(TooFewRows):
        kfold(3, 5)
    with pytest.raises(ValueError):
        kfold(10, 1)


@given(st.integers(2, 12), st.integers(0, 200), st.booleans(), st.integers(0, 99))
def test_partition_property(k, extra, shuffled, seed):
    n = k + extra
    f = kfold(n, k, shuffled, seed)
    tested = np.concatenate([te for _, te in f.splits()])
    assert sorted(tested) == list(range(n))
    for tr, te in f.splits():
        assert not set(tr) & set(te) and len(tr) + len(te) == n
    assert max(f.sizes()) - min(f.sizes()) <= 1


def test_group_kfold_keeps_users_whole():
    groups = [f"u{i % 7}" for i in range(70)]
    f = group_kfold(groups, 5)
    for _, te in f.splits():
        users_in = {groups[i] for i in te}
        assert all(groups[i] not in users_in for i in set(range(70)) - set(te))


# -- cv_score -----------------------------------------------------------------

def test_published_fold_scores_average():
    scores = (0.73793103, 0.64137931, 0.73793103, 0.70833333, 0.69230769)
    mean = sum(scores) / 5
    assert round(mean, 4) == 0.7036
    assert round(100 * mean, 1) == 70.4


def test_perfect_model_scores_one():
    rng = np.random.default_rng(0)
    y = rng.random(50) < 0.5
    X = np.column_stack([np.where(y, 1.0, -1.0), rng.normal(size=50)])
    r = cv_score(matrix(X, y), ModelSpec.of("svm", C=10.0), kfold(50, 5))
    assert r.fold_scores == (1.0,) * 5 and r.mean_score == 1.0


def test_constant_prediction_matches_fold_counts():
    rng = np.random.default_rng(1)
    y = rng.permutation(np.repeat([True, False], 25))
    folds = kfold(50, 5)
    r = cv_score(matrix(rng.normal(size=(50, 2)), y), ModelSpec("majority"), folds)
    expected = []
    for tr, te in folds.splits():
        # oracle: training majority (ties to the smaller label), counted on the held-out fold
        pos = int(y[tr].sum())
        guess = pos > len(tr) - pos
        expected.append(float(np.sum(y[te] == guess)) / len(te))
    assert r.fold_scores == tuple(expected)
    assert abs(r.mean_score - sum(expected) / 5) <= 1e-12


def test_degenerate_fold_is_flagged():
    y = np.array([True] * 10 + [False] * 10)
    X = np.arange(20.0)[:, None]
    r = cv_score(matrix(X, y), ModelSpec("svm"), kfold(20, 2))
    assert r.degenerate_folds == (0, 1)
    assert r.fold_scores == (0.0, 0.0)


def test_lasso_uses_r2():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(60, 3))
    y_reg = X @ [3.0, 0.0, -1.0] + 0.1 * rng.normal(size=60)
    r = cv_score(matrix(X, y_reg > 0, y_reg), ModelSpec.of("lasso", alpha=0.01), kfold(60, 5))
    assert r.metric == "r2" and all(0.9 < s <= 1 for s in r.fold_scores)


def test_no_leakage_under_test_row_permutation():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 3))
    y = X[:, 0] + 0.8 * rng.normal(size=50) > 0
    folds = kfold(50, 5)
    base = cv_score(matrix(X, y), ModelSpec("centroid"), folds)
    _, te = next(folds.splits())
    perm = np.arange(50)
    perm[te] = rng.permutation(te)
    moved = cv_score(matrix(X[perm], y[perm]), ModelSpec("centroid"), folds)
    assert moved.fold_scores == base.fold_scores


def test_scores_are_bounded_and_mean_exact():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(43, 4))
    y = rng.random(43) < 0.4
    r = cv_score(matrix(X, y), ModelSpec.of("trees", n_estimators=3), kfold(43, 5))
    assert all(0 <= s <= 1 for s in r.fold_scores)
    assert abs(r.mean_score - sum(r.fold_scores) / 5) <= 1e-12


# -- sweeps -------------------------------------------------------------------

def test_hourly_sweep_shape_and_order(small_cohort):
    days, profiles = small_cohort
    specs = [ModelSpec("svm"), ModelSpec("centroid")]
    rep = hourly_sweep(days, profiles, {15, 11, 12, 13, 14}, specs, FeatureConfig())
    assert [(r.cutoff_hour, r.model_spec.family) for r in rep.rows] == \
        [(h, f) for h in range(11, 16) for f in ("svm", "centroid")]
    assert set(rep.fingerprints) == set(range(11, 16))
    csv = report_csv(rep.rows).splitlines()
    assert csv[0] == "hour,model,param_summary,fold1,fold2,fold3,fold4,fold5,mean"
    assert len(csv) == 11
    assert all(len(c.split(",")[-1].split(".")[1]) == 8 for c in csv[1:])
    assert curve_csv(rep.rows).splitlines()[0] == "hour,svm,centroid"


def test_empty_hour_set_echoes_config(small_cohort):
    days, profiles = small_cohort
    rep = hourly_sweep(days, profiles, set(), [ModelSpec("svm")], FeatureConfig())
    assert rep.rows == [] and rep.config["hours"] == []
    assert json.loads(report_json(rep))["config"]["models"] == [{"family": "svm", "params": {}}]


def test_hour_23_certainty(small_cohort):
    days, profiles = small_cohort
    m = build_matrix(days, profiles, FeatureConfig(cutoff_hour=23))
    # oracle: the label is recomputed from the cumulative column alone
    cum = m.X[:, m.column_names.index("steps_cumulative")]
    assert np.array_equal(cum >= 10000, m.y_class)
    only_cum = matrix(cum[:, None], m.y_class)
    r = cv_score(only_cum, ModelSpec.of("svm", C=100.0, max_epochs=100_000), kfold(len(m), 5))
    assert r.mean_score == 1.0


def test_parallel_equals_serial(small_cohort):
    days, profiles = small_cohort
    specs = [ModelSpec("svm"), ModelSpec.of("trees", n_estimators=2)]
    a = hourly_sweep(days, profiles, {12, 20}, specs, FeatureConfig(), n_jobs=1)
    b = hourly_sweep(days, profiles, {12, 20}, specs, FeatureConfig(), n_jobs=2)
    assert report_json(a) == report_json(b)


# -- grid search --------------------------------------------------------------

def test_grid_search_matches_independent_runs(small_cohort):
    days, profiles = small_cohort
    m = build_matrix(days, profiles, FeatureConfig(cutoff_hour=14))
    folds = kfold(len(m), 5)
    grid = [10.0 ** e for e in range(-4, 3)]
    res = grid_search(m, "svm", {"C": grid}, folds)
    assert len(res.table) == 7
    for c, row in zip(grid, res.table):
        assert row.fold_scores == cv_score(m, ModelSpec.of("svm", C=c), folds).fold_scores
    best = max(r.mean_score for r in res.table)
    assert res.best_report.mean_score == best
    assert res.best == min((r for r in res.table if r.mean_score == best),
                           key=lambda r: dict(r.model_spec.params)["C"]).model_spec


def test_single_cell_and_metric_grid(small_cohort):
    days, profiles = small_cohort
    m = build_matrix(days, profiles, FeatureConfig(cutoff_hour=14))
    folds = kfold(len(m), 5)
    assert grid_search(m, "svm", {"C": [0.5]}, folds).best == ModelSpec.of("svm", C=0.5)
    res = grid_search(m, "centroid", {"metric": ["euclidean", "cosine", "manhattan"]}, folds)
    assert [dict(r.model_spec.params)["metric"] for r in res.table] == ["euclidean", "cosine", "manhattan"]


def test_tie_breaks_prefer_regularisation():
    y = np.array([True, False] * 10)
    noise = np.random.default_rng(5).normal(0, 0.5, 20)
    m = matrix(np.column_stack([np.where(y, 5.0, -5.0) + noise]), y)
    folds = kfold(20, 5)
    res = grid_search(m, "svm", {"C": [10.0, 1.0, 0.1]}, folds)
    assert all(r.mean_score == 1.0 for r in res.table)
    assert res.best == ModelSpec.of("svm", C=0.1)
    res = grid_search(m, "centroid", {"shrink_threshold": [0.0, 0.1, 0.2]}, folds)
    assert res.best == ModelSpec.of("centroid", shrink_threshold=0.2)


def test_unsupported_kernel_is_rejected():
    y = np.array([True, False] * 10)
    m = matrix(np.column_stack([np.where(y, 1.0, -1.0)]), y)
    res = grid_search(m, "svm", {"kernel": ["linear", "rbf", "poly"]}, kfold(20, 5))
    assert len(res.table) == 1
    assert [dict(s.params)["kernel"] for s, _ in res.rejected] == ["rbf", "poly"]
