"""Seeded synthetic walker cohorts in both raw day formats.

Each user-day is generated hour first (a per-user rhythm, a day-level level
shift and a within-day log-AR(1) "momentum" term), then sliced into minutes
or merged into storyline segments, so pedometer and storyline cohorts drawn
with the same seed share their hourly statistics.

Goal chasing: a day that would finish within ``goal_chase_band`` steps short
of the goal gets an evening top-up walk that carries it over the goal.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .bucketing import WEATHER_CONDITIONS, WeatherObs
from .exceptions import InvalidSpec
from .features import DEFAULT_GOAL
from .ingest import (
    LOCATION,
    SECONDS_PER_DAY,
    TRANSITION,
    MinuteSeries,
    Segment,
    StorylineDay,
    UserProfile,
    serialize,
)

RHYTHMS = ("commuter", "homebody", "athlete")
PLACE_NAMES = {"home": "home", "work": "office", "gym": "gym", "transit": "station", "other": "cafe"}
MOTIVATIONS = ("health", "training", "weight loss", "curiosity")

_NIGHT = np.array([0.03, 0.02, 0.02, 0.02, 0.03, 0.1])


def _template(rhythm: str, rng: np.random.Generator) -> np.ndarray:
    shape = np.empty(24)
    shape[:6] = _NIGHT
    if rhythm == "commuter":
        shape[6:] = [0.6, 2.6, 3.0, 0.8, 0.7, 0.9, 1.6, 1.0, 0.7, 0.7, 1.0, 2.8, 2.6, 1.0, 0.9, 0.7, 0.4, 0.15]
        shift = int(rng.integers(-1, 2))
        shape[6:] = np.roll(shape[6:], shift)
    elif rhythm == "homebody":
        shape[6:] = [0.2, 0.5, 0.8, 1.0, 1.0, 1.0, 1.1, 1.0, 1.0, 1.0, 1.0, 0.9, 0.9, 0.8, 0.7, 0.5, 0.3, 0.1]
    elif rhythm == "athlete":
        shape[6:] = [0.5, 0.8, 0.9, 0.9, 0.9, 0.9, 1.0, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.8, 0.7, 0.5, 0.3, 0.1]
        shape[int(rng.choice([6, 7, 17, 18, 19]))] += 6.0
    else:
        raise InvalidSpec(f"unknown rhythm {rhythm!r}")
    shape *= rng.lognormal(0.0, 0.15, 24)
    return shape / shape.sum()


@dataclass(frozen=True)
class CohortSpec:
    n_users: int = 80
    n_days: int = 60
    seed: int = 0
    base_rate_range: tuple[float, float] = (8000.0, 12000.0)
    weekday_multiplier: float = 1.15
    rhythm: str = "mixed"
    goal_hit_rate_target: float = 0.5
    format: str = "pedometer"
    start_date: dt.date = dt.date(2015, 1, 5)
    goal_chase_band: int = 750
    momentum: float = 0.8
    hour_noise: float = 1.0
    day_noise: float = 0.1

    def validate(self) -> None:
        if self.n_users < 1:
            raise InvalidSpec("n_users must be at least 1")
        if self.n_days < 2:
            raise InvalidSpec("n_days must be at least 2")
        lo, hi = self.base_rate_range
        if not 0 < lo <= hi:
            raise InvalidSpec("base_rate_range must satisfy 0 < min <= max")
        if not 0 < self.goal_hit_rate_target < 1:
            raise InvalidSpec("goal_hit_rate_target must lie strictly between 0 and 1")
        if self.weekday_multiplier <= 0:
            raise InvalidSpec("weekday_multiplier must be positive")
        if self.rhythm not in (*RHYTHMS, "mixed"):
            raise InvalidSpec(f"rhythm must be one of {RHYTHMS + ('mixed',)}")
        if self.format not in ("pedometer", "storyline"):
            raise InvalidSpec("format must be 'pedometer' or 'storyline'")
        if not 0 <= self.momentum < 1:
            raise InvalidSpec("momentum must lie in [0, 1)")
        if self.goal_chase_band < 0 or self.goal_chase_band >= DEFAULT_GOAL:
            raise InvalidSpec("goal_chase_band must lie in [0, goal)")
        if self.hour_noise < 0 or self.day_noise < 0:
            raise InvalidSpec("noise levels must be non-negative")


@dataclass
class Cohort:
    spec: CohortSpec
    records: list = field(default_factory=list)
    profiles: list[UserProfile] = field(default_factory=list)

    def documents(self) -> list[str]:
        """Canonical JSON text of every day, ordered by user then date."""
        return [serialize(r) for r in self.records]

    def profile_documents(self) -> list[str]:
        return [serialize(p) for p in self.profiles]


def _day_factors(spec: CohortSpec, weekday: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    level = np.where(weekday, spec.weekday_multiplier, 1.0)
    noise = rng.lognormal(-spec.day_noise ** 2 / 2, spec.day_noise, weekday.shape)
    return level * noise


def _momentum(spec: CohortSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Mean-one multiplicative hour noise, AR(1) in log space across the day."""
    rho, sigma = spec.momentum, spec.hour_noise
    state = np.empty((n, 24))
    state[:, 0] = rng.normal(0.0, sigma, n)
    innov = rng.normal(0.0, sigma * np.sqrt(1 - rho ** 2), (n, 23))
    for h in range(1, 24):
        state[:, h] = rho * state[:, h - 1] + innov[:, h - 1]
    return np.exp(state - sigma ** 2 / 2)


def _scale(spec: CohortSpec) -> float:
    """Cohort-wide multiplier hitting the target goal rate, from a side simulation.

    Days ending within the chase band below the goal are topped up, so they
    count as hits.
    """
    rng = np.random.default_rng([spec.seed, 0xCA11])
    n = 20000
    lo, hi = spec.base_rate_range
    base = rng.uniform(lo, hi, n)
    weekday = rng.integers(0, 7, n) < 5
    rhythms = RHYTHMS if spec.rhythm == "mixed" else (spec.rhythm,)
    shapes = np.vstack([_template(rhythms[i % len(rhythms)], rng) for i in range(64)])
    shape = shapes[rng.integers(0, 64, n)]
    totals = base * _day_factors(spec, weekday, rng) * (shape * _momentum(spec, n, rng)).sum(axis=1)
    threshold = DEFAULT_GOAL - spec.goal_chase_band
    return float(threshold / np.quantile(totals, 1 - spec.goal_hit_rate_target))


def _hourly_counts(spec: CohortSpec, scale: float, rng: np.random.Generator, shape, base, dates):
    weekday = np.array([d.isoweekday() <= 5 for d in dates])
    expected = (scale * base) * _day_factors(spec, weekday, rng)[:, None] * shape[None, :]
    expected = expected * _momentum(spec, len(dates), rng)
    counts = rng.poisson(expected).astype(np.int64)
    if spec.goal_chase_band:
        totals = counts.sum(axis=1)
        short = (totals >= DEFAULT_GOAL - spec.goal_chase_band) & (totals < DEFAULT_GOAL)
        for i in np.flatnonzero(short):
            hour = int(rng.choice([19, 20, 21]))
            counts[i, hour] += DEFAULT_GOAL - totals[i] + int(rng.integers(0, 400))
    return counts


def _minutes(user: str, date: dt.date, hourly: np.ndarray, rng: np.random.Generator) -> MinuteSeries:
    minutes = np.zeros(1440, dtype=np.int64)
    for h, c in enumerate(hourly):
        if c:
            minutes[60 * h:60 * h + 60] = rng.multinomial(c, rng.dirichlet(np.full(60, 0.15)))
    return MinuteSeries(user, date, tuple(int(m) for m in minutes))


def _largest_remainder(values: np.ndarray, total: int) -> np.ndarray:
    floors = np.floor(values).astype(np.int64)
    short = total - int(floors.sum())
    if short > 0:
        order = np.argsort(-(values - floors), kind="stable")
        floors[order[:short]] += 1
    return floors


def _segments(user: str, date: dt.date, hourly: np.ndarray, rhythm: str,
              rng: np.random.Generator) -> StorylineDay:
    k = int(rng.integers(3, 13))
    cut_hours = np.sort(rng.choice(np.arange(1, 24), size=k - 1, replace=False))
    cuts = cut_hours * 3600 + rng.integers(0, 60, size=k - 1) * 60
    bounds = np.concatenate([[0], cuts, [SECONDS_PER_DAY]])
    share = np.zeros(k)
    for i in range(k):
        a, b = bounds[i], bounds[i + 1]
        for h in range(a // 3600, (b - 1) // 3600 + 1):
            overlap = min(b, (h + 1) * 3600) - max(a, h * 3600)
            share[i] += hourly[h] * overlap / 3600
    steps = _largest_remainder(share, int(hourly.sum()))
    segs = []
    for i in range(k):
        a, b = int(bounds[i]), int(bounds[i + 1])
        hours = (b - a) / 3600
        rate = steps[i] / hours
        if a > 0 and b < SECONDS_PER_DAY and hours <= 3 and rate > 1200:
            segs.append(Segment(user, date, TRANSITION, a, b, int(steps[i])))
            continue
        if a < 6 * 3600 or b > 22 * 3600:
            place = "home"
        elif rhythm == "commuter":
            place = "work"
        elif rhythm == "athlete" and rate > 1500:
            place = "gym"
        else:
            place = str(rng.choice(["home", "other", "transit", "work"]))
        segs.append(Segment(user, date, LOCATION, a, b, int(steps[i]), PLACE_NAMES[place], place))
    return StorylineDay(user, date, tuple(segs))


def _user(spec: CohortSpec, index: int, scale: float):
    rng = np.random.default_rng([spec.seed, index])
    user = f"u{index:03d}"
    rhythm = spec.rhythm if spec.rhythm != "mixed" else RHYTHMS[int(rng.integers(len(RHYTHMS)))]
    shape = _template(rhythm, rng)
    base = rng.uniform(*spec.base_rate_range)
    dates = [spec.start_date + dt.timedelta(days=i) for i in range(spec.n_days)]
    counts = _hourly_counts(spec, scale, rng, shape, base, dates)
    if spec.format == "pedometer":
        records = [_minutes(user, d, c, rng) for d, c in zip(dates, counts)]
        goal = DEFAULT_GOAL
    else:
        records = [_segments(user, d, c, rhythm, rng) for d, c in zip(dates, counts)]
        goal = DEFAULT_GOAL if rng.random() < 0.5 else None
    profile = UserProfile(
        user,
        step_goal=goal,
        gender=str(rng.choice(["f", "m"])),
        age=int(rng.integers(18, 70)),
        motivation=str(rng.choice(MOTIVATIONS)),
    )
    return records, profile


def generate_cohort(spec: CohortSpec, n_jobs: int = 1) -> Cohort:
    """Deterministic in ``spec``; users are independent streams keyed by (seed, index)."""
    spec.validate()
    scale = _scale(spec)
    if n_jobs == 1:
        results = [_user(spec, i, scale) for i in range(spec.n_users)]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(_user)(spec, i, scale) for i in range(spec.n_users))
    cohort = Cohort(spec)
    for records, profile in results:
        cohort.records.extend(records)
        cohort.profiles.append(profile)
    return cohort


def synth_weather(dates, seed: int = 0) -> dict[dt.date, WeatherObs]:
    """One observation per date with a seasonal temperature cycle."""
    rng = np.random.default_rng([seed, 0xBEEF])
    table = {}
    for date in sorted(set(dates)):
        season = np.cos(2 * np.pi * (date.timetuple().tm_yday - 200) / 365.25)
        temp = round(float(12 + 12 * season + rng.normal(0, 3)), 1)
        weights = np.array([0.4, 0.3, 0.2, 0.05 if temp > 2 else 0.25, 0.05])
        cond = str(rng.choice(WEATHER_CONDITIONS, p=weights / weights.sum()))
        table[date] = WeatherObs(cond, temp)
    return table
