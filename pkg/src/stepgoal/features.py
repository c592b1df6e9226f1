"""Hour-indexed feature matrices built from bucketed days.

A matrix is built for one cutoff hour: the simulated time of day at which a
prediction is made. Only buckets up to and including the cutoff hour are
visible to the model; the label is whether the finished day reached the goal.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .bucketing import WEATHER_CONDITIONS, HourlyDay
from .exceptions import TooFewRows
from .ingest import UserProfile

DEFAULT_GOAL = 10000
LAST4 = "last4"
ALL_HOURS = "all"
WINDOWS = (LAST4, ALL_HOURS)
PLACE_TYPES = ("home", "work", "gym", "transit", "other")


@dataclass(frozen=True)
class FeatureConfig:
    cutoff_hour: int = 14
    window: str = ALL_HOURS
    include_cumulative: bool = True
    include_yesterday: bool = True
    include_weekday: bool = True
    include_weather: bool = False
    include_place: bool = False
    goal_override: int | None = None

    def __post_init__(self):
        if not isinstance(self.cutoff_hour, int) or not 0 <= self.cutoff_hour <= 23:
            raise ValueError(f"cutoff_hour must be an integer in 0..23, got {self.cutoff_hour!r}")
        if self.window not in WINDOWS:
            raise ValueError(f"window must be one of {WINDOWS}, got {self.window!r}")
        if self.window == LAST4 and self.cutoff_hour < 3:
            raise ValueError("the last-4-hours window needs cutoff_hour >= 3")
        if self.goal_override is not None and self.goal_override <= 0:
            raise ValueError("goal_override must be positive")

    @classmethod
    def last4(cls, cutoff_hour: int, **kw) -> FeatureConfig:
        """Only the four hourly buckets ending at the cutoff."""
        opts = dict(include_cumulative=False, include_yesterday=False, include_weekday=False)
        opts.update(kw)
        return cls(cutoff_hour=cutoff_hour, window=LAST4, **opts)

    def with_cutoff(self, hour: int) -> FeatureConfig:
        return FeatureConfig(**{**asdict(self), "cutoff_hour": hour})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FeatureRow:
    user_id: str
    date: dt.date
    x: np.ndarray
    y_class: bool
    y_reg: float


@dataclass
class FeatureMatrix:
    rows: list[FeatureRow]
    column_names: tuple[str, ...]
    config: FeatureConfig
    # columns that standardization leaves alone (indicators and one-hots)
    indicator_columns: tuple[bool, ...] = ()
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.indicator_columns:
            self.indicator_columns = tuple(_is_indicator(c) for c in self.column_names)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def X(self) -> np.ndarray:
        if not self.rows:
            return np.empty((0, len(self.column_names)))
        return np.vstack([r.x for r in self.rows])

    @property
    def y_class(self) -> np.ndarray:
        return np.array([r.y_class for r in self.rows], dtype=bool)

    @property
    def y_reg(self) -> np.ndarray:
        return np.array([r.y_reg for r in self.rows], dtype=float)

    @property
    def user_ids(self) -> list[str]:
        return [r.user_id for r in self.rows]

    def with_X(self, X: np.ndarray) -> FeatureMatrix:
        rows = [FeatureRow(r.user_id, r.date, np.asarray(x, dtype=float), r.y_class, r.y_reg)
                for r, x in zip(self.rows, X)]
        return FeatureMatrix(rows, self.column_names, self.config, self.indicator_columns,
                             dict(self.diagnostics))

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow([*self.column_names, "y_class", "y_reg"])
        for r in self.rows:
            writer.writerow([*(repr(float(v)) for v in r.x), int(r.y_class), repr(float(r.y_reg))])
        return out.getvalue()


def _is_indicator(name: str) -> bool:
    return name == "is_weekday" or name.startswith(("weather_", "place_"))


def column_names(config: FeatureConfig) -> tuple[str, ...]:
    """Column schema for ``config``; depends on nothing else."""
    c = config.cutoff_hour
    hours = range(c - 3, c + 1) if config.window == LAST4 else range(0, c + 1)
    names = [f"steps_h{h:02d}" for h in hours]
    if config.include_cumulative:
        names.append("steps_cumulative")
    if config.include_yesterday:
        names.append("steps_yesterday")
    if config.include_weekday:
        names += ["day_of_week", "is_weekday"]
    if config.include_weather:
        names += [f"weather_{w}" for w in (*WEATHER_CONDITIONS, "unknown")]
        names.append("temperature_c")
    if config.include_place:
        names += [f"place_{p}" for p in (*PLACE_TYPES, "unknown")]
    return tuple(names)


def label_goal(day: HourlyDay, goal: int) -> bool:
    """Goal reached when the day's total is at least the goal (ties count as met)."""
    if goal <= 0:
        raise ValueError("goal must be positive")
    return bool(day.steps_today >= goal)


def resolve_goal(profile: UserProfile | None, config: FeatureConfig) -> int:
    if config.goal_override is not None:
        return config.goal_override
    if profile is not None and profile.step_goal is not None:
        return profile.step_goal
    return DEFAULT_GOAL


def _row_vector(day: HourlyDay, prev: HourlyDay | None, config: FeatureConfig) -> list[float]:
    c = config.cutoff_hour
    lo = c - 3 if config.window == LAST4 else 0
    x = [float(v) for v in day.buckets[lo:c + 1]]
    if config.include_cumulative:
        x.append(float(day.buckets[:c + 1].sum()))
    if config.include_yesterday:
        x.append(float(prev.steps_today))
    if config.include_weekday:
        dow = day.date.isoweekday()  # Monday = 1 .. Sunday = 7
        x += [float(dow), float(dow <= 5)]
    if config.include_weather:
        cond = day.weather.condition if day.weather else "unknown"
        x += [float(cond == w) for w in (*WEATHER_CONDITIONS, "unknown")]
        x.append(float(day.weather.temperature) if day.weather else 0.0)
    if config.include_place:
        place = day.hourly_place_type[c] if day.hourly_place_type else None
        if place is not None and place not in PLACE_TYPES:
            place = "other"
        place = place or "unknown"
        x += [float(place == p) for p in (*PLACE_TYPES, "unknown")]
    return x


def build_matrix(
    days: Iterable[HourlyDay],
    profiles: Mapping[str, UserProfile] | None,
    config: FeatureConfig,
) -> FeatureMatrix:
    """One labelled row per (user, date), ordered by user then date.

    With ``include_yesterday`` a day is only usable when the same user has a
    record for the previous calendar date; other days are dropped and counted
    under ``diagnostics["insufficient_history"]``.
    """
    profiles = profiles or {}
    by_user: dict[str, dict[dt.date, HourlyDay]] = defaultdict(dict)
    for day in days:
        if day.date in by_user[day.user_id]:
            raise ValueError(f"duplicate day {day.user_id}/{day.date}")
        by_user[day.user_id][day.date] = day

    names = column_names(config)
    rows = []
    dropped = 0
    for user in sorted(by_user):
        goal = resolve_goal(profiles.get(user), config)
        user_days = by_user[user]
        for date in sorted(user_days):
            day = user_days[date]
            prev = user_days.get(date - dt.timedelta(days=1))
            if config.include_yesterday and prev is None:
                dropped += 1
                continue
            x = np.array(_row_vector(day, prev, config))
            rows.append(FeatureRow(user, date, x, label_goal(day, goal), float(day.steps_today)))
    return FeatureMatrix(rows, names, config, diagnostics={"insufficient_history": dropped})


class Standardizer(TransformerMixin, BaseEstimator):
    """Zero-mean, unit-variance scaling of continuous columns.

    Columns flagged in ``skip`` (one-hot and 0/1 indicators) pass through
    untouched. A constant column is centred and keeps scale 1.
    """

    def __init__(self, skip: Sequence[bool] | None = None):
        self.skip = skip

    def fit(self, X, y=None):
        X = check_array(X, dtype=float, ensure_min_samples=1)
        if X.shape[0] < 2:
            raise TooFewRows("standardization needs at least 2 rows")
        skip = np.zeros(X.shape[1], bool) if self.skip is None else np.asarray(self.skip, bool)
        if skip.shape != (X.shape[1],):
            raise ValueError("skip mask length does not match the column count")
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale <= 1e-12 * np.maximum(1.0, np.abs(mean))] = 1.0
        mean[skip] = 0.0
        scale[skip] = 1.0
        self.mean_ = mean
        self.scale_ = scale
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=float, ensure_min_samples=0)
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self, "mean_")
        return np.asarray(X, dtype=float) * self.scale_ + self.mean_


def standardize(matrix: FeatureMatrix) -> tuple[FeatureMatrix, Standardizer]:
    if len(matrix) < 2:
        raise TooFewRows("standardization needs at least 2 rows")
    scaler = Standardizer(skip=matrix.indicator_columns).fit(matrix.X)
    return matrix.with_X(scaler.transform(matrix.X)), scaler
