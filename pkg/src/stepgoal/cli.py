"""Command-line entry point: ingest, synth, featurize, select, eval, sweep, gridsearch, train, predict.

Exit codes: 0 on success, 1 on a usage error, 2 when input data fails validation.
Every command that writes outputs also writes ``run_config.json`` beside them;
passing that file back through ``--config`` reproduces the outputs byte for byte.
"""
from __future__ import annotations

import argparse
import datetime as dt
import json
import os
import sys
from pathlib import Path

import numpy as np

from .bucketing import attach_weather, bucket_day, load_weather_fixture, write_weather_fixture
from .eval import (
    FAMILIES,
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
from .exceptions import DataError, EmptyInput, IoFailure, MalformedDocument, StepGoalError
from .features import FeatureConfig, Standardizer, build_matrix
from .ingest import DayStore, UserProfile, atomic_write_text, parse_document
from .models import dumps_model, loads_model, pca_fit, lasso_fit, tree_importance
from .models._base import decode_array, encode_array
from .synth import CohortSpec, generate_cohort, synth_weather

STORE_ENV = "STEPGOAL_STORE"
CONFIG_NAME = "run_config.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class _Append(argparse.Action):
    """Like ``append``, but an explicit flag replaces a list inherited from ``--config``."""

    def __call__(self, parser, namespace, values, option_string=None):
        marker = f"_given_{self.dest}"
        items = list(getattr(namespace, self.dest) or []) if getattr(namespace, marker, False) else []
        items.append(values)
        setattr(namespace, self.dest, items)
        setattr(namespace, marker, True)


# -- argument value parsers ---------------------------------------------------

def parse_hours(text: str) -> list[int]:
    """``"11-15"``, ``"9,12,20-23"`` or ``"all"`` to a sorted list of hours."""
    if text == "all":
        return list(range(24))
    hours = set()
    for part in filter(None, text.split(",")):
        lo, sep, hi = part.partition("-")
        try:
            a, b = int(lo), int(hi if sep else lo)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad hour range {part!r}") from None
        if not 0 <= a <= b <= 23:
            raise argparse.ArgumentTypeError(f"hours must lie in 0..23, got {part!r}")
        hours.update(range(a, b + 1))
    return sorted(hours)


def _scalar(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return {"true": True, "false": False, "none": None}.get(text.lower(), text)


def parse_model(text: str) -> ModelSpec:
    """``family`` or ``family:key=value,key=value``."""
    family, _, rest = text.partition(":")
    if family not in FAMILIES:
        raise argparse.ArgumentTypeError(f"unknown model {family!r}; choose from {sorted(FAMILIES)}")
    params = []
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        if not eq:
            raise argparse.ArgumentTypeError(f"expected key=value in {text!r}")
        params.append((key, _scalar(value)))
    return ModelSpec(family, tuple(params))


def parse_grid(items: list[str]) -> dict[str, list]:
    """``["C=0.001,0.01", "kernel=linear"]`` to ``{"C": [0.001, 0.01], "kernel": ["linear"]}``."""
    grid = {}
    for item in items:
        key, eq, values = item.partition("=")
        if not eq or not values:
            raise UsageError(f"grid entry {item!r} must look like name=v1,v2")
        grid[key] = [_scalar(v) for v in values.split(",")]
    return grid


# -- parser -------------------------------------------------------------------

def _feature_flags(p):
    g = p.add_argument_group("features")
    g.add_argument("--cutoff", type=int, default=14, help="cutoff hour 0..23")
    g.add_argument("--window", choices=["all", "last4"], default="all")
    g.add_argument("--no-cumulative", dest="cumulative", action="store_false", default=True)
    g.add_argument("--no-yesterday", dest="yesterday", action="store_false", default=True)
    g.add_argument("--no-weekday", dest="weekday", action="store_false", default=True)
    g.add_argument("--weather", action="store_true", default=False, help="add weather one-hot columns")
    g.add_argument("--place", action="store_true", default=False, help="add place-type one-hot columns")
    g.add_argument("--goal", type=int, default=None, help="override every user's step goal")
    g.add_argument("--weather-fixture", default=None, help="CSV of date,condition,temperature_c")
    g.add_argument("--bucket-mode", choices=["equal", "duration"], default="equal")


def _eval_flags(p):
    g = p.add_argument_group("evaluation")
    g.add_argument("--k", type=int, default=5)
    g.add_argument("--shuffle", action="store_true", default=False)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--group-by-user", action="store_true", default=False)
    g.add_argument("--no-standardize", dest="standardize", action="store_false", default=True)
    g.add_argument("--jobs", type=int, default=1)


def _out_flags(p):
    p.add_argument("--out-dir", default="out")
    p.add_argument("--formats", default="csv,json", help="comma list drawn from csv,json")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stepgoal", description=__doc__.splitlines()[0])
    parser.add_argument("--store", default=None, help=f"store directory (default ${STORE_ENV} or ./store)")
    parser.add_argument("--config", default=None, help="JSON file of defaults; explicit flags win")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse raw JSON documents into the store")
    p.add_argument("files", nargs="+")
    p.add_argument("--overwrite", action="store_true", default=False)

    p = sub.add_parser("synth", help="generate a synthetic cohort into the store")
    p.add_argument("--users", type=int, default=80)
    p.add_argument("--days", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["pedometer", "storyline"], default="pedometer")
    p.add_argument("--rhythm", choices=["commuter", "homebody", "athlete", "mixed"], default="mixed")
    p.add_argument("--goal-rate", type=float, default=0.5)
    p.add_argument("--out", default=None, help="store directory to write (defaults to --store)")
    p.add_argument("--weather-out", default=None, help="also write a weather fixture CSV here")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("featurize", help="write the feature matrix as CSV")
    _feature_flags(p)
    p.add_argument("--out", default=None, help="CSV path (default: <out-dir>/features.csv)")
    p.add_argument("--out-dir", default="out")

    p = sub.add_parser("select", help="LASSO, PCA and tree-importance diagnostics")
    _feature_flags(p)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--components", type=int, default=10)
    p.add_argument("--trees", type=int, default=10)
    p.add_argument("--tree-seed", type=int, default=0)
    _out_flags(p)

    p = sub.add_parser("eval", help="k-fold cross-validation of one model at one cutoff")
    _feature_flags(p)
    _eval_flags(p)
    p.add_argument("--model", type=parse_model, default=ModelSpec("svm"))
    _out_flags(p)

    p = sub.add_parser("sweep", help="cross-validate models at every requested cutoff hour")
    _feature_flags(p)
    _eval_flags(p)
    p.add_argument("--hours", type=parse_hours, default=list(range(11, 16)))
    p.add_argument("--model", type=parse_model, action=_Append, default=None,
                   help="family[:key=value,...] (repeatable)")
    _out_flags(p)

    p = sub.add_parser("gridsearch", help="exhaustive hyperparameter search at one cutoff")
    _feature_flags(p)
    _eval_flags(p)
    p.add_argument("--model", type=parse_model, default=ModelSpec("svm"),
                   help="family plus fixed parameters")
    p.add_argument("--grid", action=_Append, default=None, help="name=v1,v2,... (repeatable)")
    _out_flags(p)

    p = sub.add_parser("train", help="fit scaling and a model on every row and save a bundle")
    _feature_flags(p)
    p.add_argument("--model", type=parse_model, default=ModelSpec("svm"))
    p.add_argument("--no-standardize", dest="standardize", action="store_false", default=True)
    p.add_argument("--out", default=None, help="bundle path (default: <out-dir>/model.json)")
    p.add_argument("--out-dir", default="out")

    p = sub.add_parser("predict", help="score one stored day with a saved bundle")
    p.add_argument("--model-file", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--date", required=True, type=dt.date.fromisoformat)
    p.add_argument("--cutoff", type=int, default=None, help="must match the bundle when given")
    p.add_argument("--weather-fixture", default=None)
    p.add_argument("--bucket-mode", choices=["equal", "duration"], default=None)
    return parser


# -- config handling ----------------------------------------------------------

_TYPED = {"model": parse_model, "hours": parse_hours, "date": dt.date.fromisoformat}


def _from_config(key, value):
    if key == "model" and isinstance(value, list):
        return [ModelSpec(v["family"], tuple(v["params"].items())) if isinstance(v, dict) else parse_model(v)
                for v in value]
    if key == "model" and isinstance(value, dict):
        return ModelSpec(value["family"], tuple(value["params"].items()))
    if key == "hours" and isinstance(value, list):
        return [int(h) for h in value]
    if key in _TYPED and isinstance(value, str):
        return _TYPED[key](value)
    return value


def _to_config(value):
    if isinstance(value, ModelSpec):
        return value.to_dict()
    if isinstance(value, list):
        return [_to_config(v) for v in value]
    if isinstance(value, dt.date):
        return value.isoformat()
    return value


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("stepgoal: a subcommand is required")
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"config file {args.config} not found") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {args.config} is not valid JSON: {exc}") from None
        if loaded.get("command", args.command) != args.command:
            raise UsageError(f"config was written by {loaded['command']!r}, not {args.command!r}")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions} | {"store"}
        defaults = {k: _from_config(k, v) for k, v in loaded.items() if k in known}
        parser.set_defaults(**{k: v for k, v in defaults.items() if k == "store"})
        sub.set_defaults(**{k: v for k, v in defaults.items() if k != "store"})
        args = parser.parse_args(argv)
    if args.store is None:
        args.store = os.environ.get(STORE_ENV, "store")
    return args


def echo_config(args: argparse.Namespace, directory: Path) -> None:
    data = {k: _to_config(v) for k, v in vars(args).items() if k != "config" and not k.startswith("_")}
    atomic_write_text(directory / CONFIG_NAME, json.dumps(data, sort_keys=True, indent=1) + "\n")


def _out_dir(args) -> Path:
    path = Path(args.out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {path}: {exc}") from exc
    return path


def _formats(args) -> set[str]:
    chosen = {f.strip() for f in args.formats.split(",") if f.strip()}
    if not chosen or chosen - {"csv", "json"}:
        raise UsageError(f"--formats must be drawn from csv,json; got {args.formats!r}")
    return chosen


# -- shared loading -----------------------------------------------------------

def feature_config(args) -> FeatureConfig:
    try:
        return FeatureConfig(
            cutoff_hour=args.cutoff, window=args.window, include_cumulative=args.cumulative,
            include_yesterday=args.yesterday, include_weekday=args.weekday,
            include_weather=args.weather, include_place=args.place, goal_override=args.goal,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def load_days(store: str, mode: str = "equal", fixture: str | None = None):
    root = Path(store)
    store_obj = DayStore(root)
    records = store_obj.load_days() if root.is_dir() else []
    if not records:
        raise EmptyInput(f"no days found in store {store}")
    days = [bucket_day(r, mode) for r in records]
    if fixture is not None:
        table = load_weather_fixture(fixture)
        days = [attach_weather(d, table) for d in days]
    return days, store_obj.load_profiles()


def _matrix(args):
    days, profiles = load_days(args.store, args.bucket_mode, args.weather_fixture)
    m = build_matrix(days, profiles, feature_config(args))
    if len(m) == 0:
        raise EmptyInput("no usable rows after feature building")
    return m


def _folds(args, m):
    if args.group_by_user:
        return group_kfold(m.user_ids, args.k, args.shuffle, args.seed)
    return kfold(len(m), args.k, args.shuffle, args.seed)


def _write_reports(directory: Path, stem: str, formats: set[str], csv_text: str, json_text: str):
    if "csv" in formats:
        atomic_write_text(directory / f"{stem}.csv", csv_text)
    if "json" in formats:
        atomic_write_text(directory / f"{stem}.json", json_text)


def _dump(data) -> str:
    return json.dumps(data, sort_keys=True, indent=1) + "\n"


# -- commands -----------------------------------------------------------------

def cmd_ingest(args) -> None:
    records, profiles = [], []
    for name in args.files:
        try:
            text = Path(name).read_text(encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot read {name}: {exc}") from exc
        try:
            doc = parse_document(text)
        except DataError as exc:
            raise type(exc)(f"{name}: {exc}") from exc
        (profiles if isinstance(doc, UserProfile) else records).append(doc)
    store = DayStore(Path(args.store))
    n = store.store_days(records, overwrite=args.overwrite)
    store.store_profiles(profiles)
    print(f"stored {n} days and {len(profiles)} profiles in {args.store}")


def cmd_synth(args) -> None:
    target = Path(args.out or args.store)
    try:
        spec = CohortSpec(n_users=args.users, n_days=args.days, seed=args.seed, format=args.format,
                          rhythm=args.rhythm, goal_hit_rate_target=args.goal_rate)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    cohort = generate_cohort(spec, n_jobs=args.jobs)
    store = DayStore(target)
    store.store_days(cohort.records)
    store.store_profiles(cohort.profiles)
    if args.weather_out:
        table = synth_weather([r.date for r in cohort.records], args.seed)
        atomic_write_text(Path(args.weather_out), write_weather_fixture(table))
    echo_config(args, target)
    print(f"generated {len(cohort.records)} days for {len(cohort.profiles)} users in {target}")


def cmd_featurize(args) -> None:
    m = _matrix(args)
    out = Path(args.out) if args.out else _out_dir(args) / "features.csv"
    if args.out:
        out.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out, m.to_csv())
    echo_config(args, out.parent)
    print(f"wrote {len(m)} rows x {len(m.column_names)} columns to {out}")


def cmd_select(args) -> None:
    m = _matrix(args)
    directory, formats = _out_dir(args), _formats(args)
    Z = Standardizer(skip=m.indicator_columns).fit_transform(m.X)
    names = m.column_names

    lasso = lasso_fit(Z, m.y_reg, alpha=args.alpha)
    lasso_rows = sorted(zip(names, lasso.coef_), key=lambda t: (-abs(t[1]), names.index(t[0])))
    lasso_csv = "feature,coefficient\n" + "".join(f"{n},{c:.8f}\n" for n, c in lasso_rows)

    pca = pca_fit(Z, n_components=min(args.components, *Z.shape))
    cum = np.cumsum(pca.explained_variance_ratio_)
    pca_csv = "component,explained_variance,ratio,cumulative_ratio\n" + "".join(
        f"{i + 1},{v:.8f},{r:.8f},{c:.8f}\n"
        for i, (v, r, c) in enumerate(zip(pca.explained_variance_, pca.explained_variance_ratio_, cum)))

    trees = tree_importance(Z, m.y_class, n_estimators=args.trees, seed=args.tree_seed)
    tree_rows = sorted(zip(names, trees.feature_importances_), key=lambda t: (-t[1], names.index(t[0])))
    tree_csv = "feature,importance\n" + "".join(f"{n},{v:.8f}\n" for n, v in tree_rows)

    summary = {
        "rows": len(m),
        "lasso": {"alpha": args.alpha, "intercept": lasso.intercept_, "converged": lasso.converged_,
                  "coefficients": dict(lasso_rows)},
        "pca": {"explained_variance_ratio": pca.explained_variance_ratio_.tolist(),
                "components_for_90pct": int(np.searchsorted(cum, 0.9) + 1),
                "components_for_99pct": int(np.searchsorted(cum, 0.99) + 1) if cum[-1] >= 0.99 else None},
        "trees": {"n_estimators": args.trees, "seed": args.tree_seed, "importances": dict(tree_rows)},
    }
    if "csv" in formats:
        atomic_write_text(directory / "lasso_coefficients.csv", lasso_csv)
        atomic_write_text(directory / "pca_variance.csv", pca_csv)
        atomic_write_text(directory / "tree_importance.csv", tree_csv)
    if "json" in formats:
        atomic_write_text(directory / "select.json", _dump(summary))
    echo_config(args, directory)
    print(f"feature diagnostics for {len(m)} rows written to {directory}")


def cmd_eval(args) -> None:
    m = _matrix(args)
    directory, formats = _out_dir(args), _formats(args)
    report = cv_score(m, args.model, _folds(args, m), args.standardize, args.jobs)
    _write_reports(directory, "eval", formats, report_csv([report]), _dump(report.to_dict()))
    echo_config(args, directory)
    print(f"{args.model.family} at hour {args.cutoff}: mean {report.metric} {report.mean_score:.4f}")


def cmd_sweep(args) -> None:
    days, profiles = load_days(args.store, args.bucket_mode, args.weather_fixture)
    directory, formats = _out_dir(args), _formats(args)
    specs = args.model or [ModelSpec("svm")]
    rep = hourly_sweep(days, profiles, args.hours, specs, feature_config(args), k=args.k,
                       shuffled=args.shuffle, seed=args.seed, group_by_user=args.group_by_user,
                       standardize=args.standardize, n_jobs=args.jobs)
    _write_reports(directory, "sweep", formats, report_csv(rep.rows), report_json(rep))
    if "csv" in formats:
        atomic_write_text(directory / "curve.csv", curve_csv(rep.rows))
    echo_config(args, directory)
    print(f"{len(rep.rows)} rows written to {directory}")


def cmd_gridsearch(args) -> None:
    m = _matrix(args)
    directory, formats = _out_dir(args), _formats(args)
    grid = parse_grid(args.grid or [])
    if not grid:
        raise UsageError("gridsearch needs at least one --grid name=v1,v2")
    res = grid_search(m, args.model.family, grid, _folds(args, m), dict(args.model.params),
                      args.standardize, args.jobs)
    data = {
        "best": res.best.to_dict(),
        "best_mean": res.best_report.mean_score,
        "table": [r.to_dict() for r in res.table],
        "rejected": [{"model": s.to_dict(), "reason": why} for s, why in res.rejected],
    }
    _write_reports(directory, "grid", formats, report_csv(res.table), _dump(data))
    echo_config(args, directory)
    print(f"best {res.best.summary() or res.best.family}: mean {res.best_report.mean_score:.4f}")


def cmd_train(args) -> None:
    m = _matrix(args)
    X = m.X
    scaler = None
    if args.standardize:
        scaler = Standardizer(skip=m.indicator_columns).fit(X)
        X = scaler.transform(X)
    y = m.y_reg if args.model.metric == "r2" else m.y_class
    model = args.model.build().fit(X, y)
    bundle = {
        "features": feature_config(args).to_dict(),
        "bucket_mode": args.bucket_mode,
        "columns": list(m.column_names),
        "scaler": None if scaler is None else {"mean": encode_array(scaler.mean_),
                                               "scale": encode_array(scaler.scale_)},
        "model": json.loads(dumps_model(model)),
        "spec": args.model.to_dict(),
    }
    out = Path(args.out) if args.out else _out_dir(args) / "model.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out, _dump(bundle))
    echo_config(args, out.parent)
    print(f"trained {args.model.family} on {len(m)} rows; bundle at {out}")


def cmd_predict(args) -> None:
    try:
        bundle = json.loads(Path(args.model_file).read_text(encoding="utf-8"))
        config = FeatureConfig(**bundle["features"])
        model = loads_model(json.dumps(bundle["model"]))
    except OSError as exc:
        raise IoFailure(f"cannot read {args.model_file}: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDocument(f"{args.model_file} is not a model bundle: {exc}") from exc
    if args.cutoff is not None and args.cutoff != config.cutoff_hour:
        raise UsageError(f"bundle was trained at cutoff {config.cutoff_hour}, not {args.cutoff}")
    days, profiles = load_days(args.store, args.bucket_mode or bundle.get("bucket_mode", "equal"),
                               args.weather_fixture)
    wanted = [d for d in days if d.user_id == args.user and d.date in (args.date, args.date - dt.timedelta(days=1))]
    m = build_matrix(wanted, profiles, config)
    row = [r for r in m.rows if r.date == args.date]
    if not row:
        raise EmptyInput(f"no usable day {args.user}/{args.date} in store {args.store}")
    x = row[0].x[None, :]
    if bundle["scaler"] is not None:
        x = (x - decode_array(bundle["scaler"]["mean"])) / decode_array(bundle["scaler"]["scale"])
    pred = model.predict(x)[0]
    value = pred.item() if hasattr(pred, "item") else pred
    print(json.dumps({"user": args.user, "date": args.date.isoformat(), "cutoff_hour": config.cutoff_hour,
                      "model": bundle["spec"]["family"], "prediction": value}, sort_keys=True))


COMMANDS = {
    "ingest": cmd_ingest, "synth": cmd_synth, "featurize": cmd_featurize, "select": cmd_select,
    "eval": cmd_eval, "sweep": cmd_sweep, "gridsearch": cmd_gridsearch, "train": cmd_train,
    "predict": cmd_predict,
}


def run_command(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except StepGoalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
