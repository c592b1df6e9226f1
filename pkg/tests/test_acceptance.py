"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` or ``python3 tests/test_acceptance.py``.
"""
import datetime as dt
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import (
    jacobi_eigenvalues,
    lasso_objective,
    lasso_proximal_gradient,
    nearest_centroid_bruteforce,
    svm_dual_projected_gradient,
    svm_dual_value,
)
from stepgoal.bucketing import bucket_day, bucket_segments
from stepgoal.cli import run_command
from stepgoal.eval import ModelSpec, cv_score, hourly_sweep, kfold
from stepgoal.features import FeatureConfig, build_matrix
from stepgoal.ingest import Segment
from stepgoal.models import LinearSVM, centroid_fit, lasso_fit, pca_fit, tree_importance
from stepgoal.synth import CohortSpec, generate_cohort


@pytest.fixture
def criterion(request, capsys):
    """Collects a number, title and detail; prints the verdict at teardown."""
    info = {"detail": ""}
    yield info
    rep = getattr(request.node, "rep_call", None)
    ok = rep is not None and rep.passed
    line = f"[criterion {info['n']:>2}] {'PASS' if ok else 'FAIL'}: {info['title']}"
    if info["detail"]:
        line += f" ({info['detail']})"
    with capsys.disabled():
        print("\n" + line, flush=True)


@pytest.fixture(scope="module")
def cohort_days():
    cohort = generate_cohort(CohortSpec(seed=7))
    days = [bucket_day(r) for r in cohort.records]
    return days, {p.user_id: p for p in cohort.profiles}


def test_1_bucketing_conservation(criterion):
    criterion.update(n=1, title="bucketing conserves storyline steps")
    rng = np.random.default_rng(2024)
    date = dt.date(2015, 2, 14)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 13))
        cuts = np.sort(rng.choice(np.arange(1, 86400), size=2 * n, replace=False))
        segs = [Segment("u", date, "transition", int(a), int(b), int(rng.integers(0, 8000)))
                for a, b in zip(cuts[::2], cuts[1::2])]
        total = sum(s.steps for s in segs)
        day = bucket_segments(segs, user_id="u", date=date)
        worst = max(worst, abs(day.buckets.sum() - total) / max(1, total))
    elapsed = time.perf_counter() - start
    criterion["detail"] = f"worst relative error {worst:.2e}, {elapsed:.2f} s"
    assert worst <= 1e-9
    assert elapsed < 5


def test_2_lasso_oracle(criterion):
    criterion.update(n=2, title="LASSO matches the proximal-gradient oracle")
    rng = np.random.default_rng(0)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        n, d = int(rng.integers(5, 61)), int(rng.integers(1, 9))
        X = rng.normal(size=(n, d)) * rng.uniform(0.1, 10, d)
        y = X @ rng.normal(size=d) + rng.normal(size=n)
        alpha = float(rng.choice([0.01, 0.1, 1.0]))
        m = lasso_fit(X, y, alpha=alpha, tol=1e-12, max_iter=100_000)
        w, b = lasso_proximal_gradient(X, y, alpha)
        worst = max(worst, abs(m.objective(X, y) - lasso_objective(X, y, w, b, alpha)))
    X = rng.normal(size=(40, 6))
    y = X @ rng.normal(size=6) + rng.normal(size=40)
    alpha_max = np.max(np.abs((X - X.mean(0)).T @ (y - y.mean()))) / len(y)
    zero = lasso_fit(X, y, alpha=alpha_max)
    elapsed = time.perf_counter() - start
    criterion["detail"] = f"worst gap {worst:.2e}, {elapsed:.1f} s"
    assert worst <= 1e-6
    assert np.all(zero.coef_ == 0.0)
    assert elapsed < 60


def test_3_svm_oracle(criterion):
    criterion.update(n=3, title="linear SVM matches the projected-gradient dual oracle")
    rng = np.random.default_rng(5)
    worst_gap = worst_kkt = 0.0
    oracle_mismatch = shrink_mismatch = 0
    for _ in range(50):
        n, d = int(rng.integers(4, 41)), int(rng.integers(1, 6))
        X = rng.normal(size=(n, d))
        y = np.where(X @ rng.normal(size=d) + 0.5 * rng.normal(size=n) > 0, 1, -1)
        if len(set(y)) < 2:
            y[0] = -y[0]
        Z = np.hstack([X, np.ones((n, 1))])
        for C in (0.001, 1.0, 100.0):
            a = svm_dual_projected_gradient(Z, y.astype(float), C)
            w = (a * y) @ Z
            m = LinearSVM(C=C, max_epochs=100_000).fit(X, y)
            m_plain = LinearSVM(C=C, max_epochs=100_000, shrinking=False).fit(X, y)
            worst_gap = max(worst_gap, abs(svm_dual_value(a, y, Z) - m.dual_objective_))
            worst_kkt = max(worst_kkt, m.kkt_violation_ / m.tol, m_plain.kkt_violation_ / m_plain.tol)
            P = rng.normal(size=(100, d)) * 2
            oracle_mismatch += int(np.sum(np.where(P @ w[:-1] + w[-1] >= 0, 1, -1) != m.predict(P)))
            shrink_mismatch += int(np.sum(m.predict(P) != m_plain.predict(P)))
    criterion["detail"] = (f"worst gap {worst_gap:.2e}, worst KKT/tol {worst_kkt:.2f}, "
                           f"{oracle_mismatch} oracle and {shrink_mismatch} shrinking mismatches")
    assert worst_gap <= 1e-5
    assert worst_kkt <= 1.0
    assert oracle_mismatch == 0 and shrink_mismatch == 0


def test_4_pca_oracle(criterion):
    criterion.update(n=4, title="PCA matches a Jacobi eigendecomposition")
    rng = np.random.default_rng(1)
    worst_val = worst_orth = 0.0
    for _ in range(20):
        n, d = int(rng.integers(10, 51)), int(rng.integers(2, 9))
        X = rng.normal(size=(n, d)) @ rng.normal(size=(d, d))
        m = pca_fit(X, n_components=d)
        Xc = X - X.mean(0)
        vals, _ = jacobi_eigenvalues(Xc.T @ Xc / (n - 1))
        worst_val = max(worst_val, np.max(np.abs(m.explained_variance_ - vals)))
        worst_orth = max(worst_orth, np.max(np.abs(m.components_ @ m.components_.T - np.eye(d))))
        assert np.all(np.diff(m.explained_variance_ratio_) <= 0)
        assert m.explained_variance_ratio_.sum() <= 1 + 1e-12
    criterion["detail"] = f"worst variance error {worst_val:.2e}, worst orthonormality error {worst_orth:.2e}"
    assert worst_val <= 1e-8
    assert worst_orth <= 1e-8


def test_5_centroid_bruteforce(criterion):
    criterion.update(n=5, title="nearest centroid equals brute-force argmin")
    rng = np.random.default_rng(3)
    X = rng.normal(size=(150, 4)) + 0.3
    y = rng.integers(0, 3, 150)
    X[y == 1] += [1.0, 0, -0.5, 0]
    P = rng.normal(size=(1000, 4)) * 1.5
    mismatches = {}
    for metric in ("euclidean", "cosine", "manhattan"):
        m = centroid_fit(X, y, metric=metric)
        mismatches[metric] = int(np.sum(m.predict(P) != nearest_centroid_bruteforce(X, y, P, metric)))
        shrunk0 = centroid_fit(X, y, metric=metric, shrink_threshold=0.0)
        mismatches[metric + "/t=0"] = int(np.sum(shrunk0.predict(P) != m.predict(P)))
    criterion["detail"] = ", ".join(f"{k}: {v}" for k, v in mismatches.items())
    assert not any(mismatches.values())


def test_6_tree_importance(criterion):
    criterion.update(n=6, title="tree importance finds the threshold feature")
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(500, 6))
    y = X[:, 3] > 0.4
    hits = 0
    for seed in range(20):
        imp = tree_importance(X, y, seed=seed).feature_importances_
        assert np.all(imp >= 0)
        assert abs(imp.sum() - 1) <= 1e-9
        hits += int(np.argmax(imp) == 3)
    criterion["detail"] = f"argmax = feature 3 for {hits}/20 seeds"
    assert hits == 20


def test_7_cv_harness(criterion):
    criterion.update(n=7, title="cross-validation partition and published fold-score average")
    for n, shuffled in [(10, False), (11, False), (97, True), (4720, False), (4720, True)]:
        f = kfold(n, 5, shuffled=shuffled, seed=3)
        tested = np.sort(np.concatenate([te for _, te in f.splits()]))
        assert np.array_equal(tested, np.arange(n))
        assert max(f.sizes()) - min(f.sizes()) <= 1
    rng = np.random.default_rng(8)
    X = rng.normal(size=(83, 3))
    yc = X[:, 0] + rng.normal(size=83) > 0
    from stepgoal.features import FeatureMatrix, FeatureRow
    rows = [FeatureRow("u", dt.date(2015, 1, 1) + dt.timedelta(days=i), x, bool(c), 0.0)
            for i, (x, c) in enumerate(zip(X, yc))]
    m = FeatureMatrix(rows, ("a", "b", "c"), FeatureConfig())
    rep = cv_score(m, ModelSpec("centroid"), kfold(83, 5))
    assert abs(rep.mean_score - sum(rep.fold_scores) / len(rep.fold_scores)) <= 1e-12
    published = (0.73793103, 0.64137931, 0.73793103, 0.70833333, 0.69230769)
    mean = sum(published) / 5
    criterion["detail"] = f"published 11:00 folds average to {mean:.4f}"
    assert round(mean, 4) == 0.7036


def test_8_end_of_day_certainty(criterion, cohort_days):
    criterion.update(n=8, title="hour-23 accuracy is 1.0 and hour 11 sits between baseline and 1.0")
    days, profiles = cohort_days
    start = time.perf_counter()
    specs = [ModelSpec.of("svm", C=1.0), ModelSpec("majority")]
    rep = hourly_sweep(days, profiles, {11, 23}, specs, FeatureConfig())
    score = {(r.cutoff_hour, r.model_spec.family): r.mean_score for r in rep.rows}
    elapsed = time.perf_counter() - start
    criterion["detail"] = (f"hour 11: {score[11, 'svm']:.4f} vs baseline {score[11, 'majority']:.4f}; "
                           f"hour 23: {score[23, 'svm']:.4f}; {elapsed:.1f} s")
    assert score[23, "svm"] == 1.0
    assert score[11, "majority"] < score[11, "svm"] < 1.0
    assert score[23, "svm"] >= score[11, "svm"]
    assert elapsed < 120


def test_9_recency_dominance(criterion, cohort_days):
    criterion.update(n=9, title="tree importance peaks in the last two hourly columns")
    days, profiles = cohort_days
    base = FeatureConfig(include_cumulative=False, include_yesterday=False, include_weekday=False)
    misses = []
    for cutoff in range(11, 16):
        m = build_matrix(days, profiles, base.with_cutoff(cutoff))
        for seed in (0, 1, 2):
            top = int(np.argmax(tree_importance(m.X, m.y_class, seed=seed).feature_importances_))
            if top < cutoff - 1:
                misses.append((cutoff, seed, m.column_names[top]))
    criterion["detail"] = f"{15 - len(misses)}/15 (cutoff, seed) pairs" + (f"; misses {misses}" if misses else "")
    assert not misses


def test_10_end_to_end_determinism(criterion, tmp_path):
    criterion.update(n=10, title="synth, sweep and report are byte-identical across runs")
    outputs = []
    for run, jobs in enumerate(["1", "1", "2"]):
        store = tmp_path / f"store{run}"
        out = tmp_path / f"out{run}"
        assert run_command(["synth", "--users", "30", "--days", "20", "--seed", "11",
                            "--out", str(store), "--jobs", jobs]) == 0
        assert run_command(["--store", str(store), "sweep", "--hours", "10-14,23", "--model", "svm",
                            "--model", "centroid", "--model", "trees:n_estimators=3",
                            "--jobs", jobs, "--out-dir", str(out)]) == 0
        outputs.append({name: (out / name).read_bytes() for name in ("sweep.csv", "sweep.json", "curve.csv")})
    same = [outputs[0] == o for o in outputs[1:]]
    criterion["detail"] = f"serial rerun identical: {same[0]}, parallel run identical: {same[1]}"
    assert all(same)


if __name__ == "__main__":
    sys.exit(pytest.main([str(Path(__file__)), "-q", "-p", "no:cacheprovider"]))
