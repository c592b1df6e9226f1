"""Hourly bucketing of raw day records into the 24-slot representation.

Storyline segments spanning several hours are split equally among every hour
bucket their half-open interval ``[start, end)`` touches; the daily total is
unchanged by the split.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import EmptySpan, MalformedFixture
from .ingest import LOCATION, DayRecord, MinuteSeries, Segment, StorylineDay

HOURS = 24
WEATHER_CONDITIONS = ("clear", "cloudy", "rain", "snow", "fog")
WEATHER_HEADER = ("date", "condition", "temperature_c")


@dataclass(frozen=True)
class WeatherObs:
    condition: str
    temperature: float

    def __post_init__(self):
        if self.condition not in WEATHER_CONDITIONS:
            raise MalformedFixture(f"unknown weather condition {self.condition!r}")


@dataclass(frozen=True, eq=False)
class HourlyDay:
    user_id: str
    date: dt.date
    buckets: np.ndarray
    steps_today: float
    source: str
    hourly_place_type: tuple[str | None, ...] | None = None
    weather: WeatherObs | None = None

    def __post_init__(self):
        b = np.array(self.buckets, dtype=float)
        if b.shape != (HOURS,):
            raise ValueError(f"buckets must have shape (24,), got {b.shape}")
        if np.any(b < 0) or not np.all(np.isfinite(b)):
            raise ValueError("buckets must be finite and non-negative")
        b.flags.writeable = False
        object.__setattr__(self, "buckets", b)
        total = float(b.sum())
        if abs(self.steps_today - total) > 1e-9 * max(1.0, self.steps_today):
            raise ValueError(f"steps_today {self.steps_today} disagrees with bucket sum {total}")

    def __eq__(self, other):
        if not isinstance(other, HourlyDay):
            return NotImplemented
        return (
            (self.user_id, self.date, self.steps_today, self.source, self.hourly_place_type, self.weather)
            == (other.user_id, other.date, other.steps_today, other.source, other.hourly_place_type, other.weather)
            and np.array_equal(self.buckets, other.buckets)
        )

    __hash__ = None


def bucket_minutes(series: MinuteSeries) -> HourlyDay:
    minutes = np.asarray(series.steps_per_minute, dtype=np.int64)
    buckets = minutes.reshape(HOURS, 60).sum(axis=1).astype(float)
    return HourlyDay(series.user_id, series.date, buckets, float(minutes.sum()), "pedometer")


def _touched_hours(start: int, end: int) -> range:
    # half-open [start, end): a segment ending at 11:00:00 does not touch hour 11
    first, last = start // 3600, (end - 1) // 3600
    return range(first, last + 1)


def bucket_segments(
    segments: StorylineDay | Sequence[Segment],
    *,
    user_id: str | None = None,
    date: dt.date | None = None,
    mode: str = "equal",
) -> HourlyDay:
    """Spread each segment's steps over the hour buckets it intersects.

    ``mode="equal"`` gives every touched bucket the same share.
    ``mode="duration"`` weights the share by the overlap in seconds; it exists
    for sensitivity analysis only.
    """
    if mode not in ("equal", "duration"):
        raise ValueError(f"unknown bucketing mode {mode!r}")
    if isinstance(segments, StorylineDay):
        user_id, date = segments.user_id, segments.date
    segs = sorted(segments, key=lambda s: (s.start, s.end))
    if segs:
        user_id = user_id if user_id is not None else segs[0].user_id
        date = date if date is not None else segs[0].date
    if user_id is None or date is None:
        raise ValueError("user_id and date are required for an empty segment list")

    buckets = np.zeros(HOURS)
    for seg in segs:
        hours = _touched_hours(seg.start, seg.end)
        if len(hours) == 0:
            raise EmptySpan(f"segment {seg.start}-{seg.end} touches no hour bucket")
        if mode == "equal":
            buckets[hours.start:hours.stop] += seg.steps / len(hours)
        else:
            span = seg.end - seg.start
            for h in hours:
                overlap = min(seg.end, (h + 1) * 3600) - max(seg.start, h * 3600)
                buckets[h] += seg.steps * overlap / span
    total = float(sum(s.steps for s in segs))
    return HourlyDay(user_id, date, buckets, total, "storyline",
                     hourly_place_type=dominant_place_types(segs))


def dominant_place_types(segments: Iterable[Segment]) -> tuple[str | None, ...]:
    """Place type of the location segment overlapping each hour the longest.

    Ties go to the earlier segment. Hours with no typed location are ``None``.
    """
    best: list[tuple[int, str] | None] = [None] * HOURS
    for seg in sorted(segments, key=lambda s: (s.start, s.end)):
        if seg.kind != LOCATION or seg.place_type is None:
            continue
        for h in _touched_hours(seg.start, seg.end):
            overlap = min(seg.end, (h + 1) * 3600) - max(seg.start, h * 3600)
            if best[h] is None or overlap > best[h][0]:
                best[h] = (overlap, seg.place_type)
    return tuple(b[1] if b else None for b in best)


def bucket_day(record: DayRecord, mode: str = "equal") -> HourlyDay:
    if isinstance(record, MinuteSeries):
        return bucket_minutes(record)
    return bucket_segments(record, mode=mode)


# -- weather fixtures -------------------------------------------------------

def load_weather_fixture(source: str | os.PathLike | io.TextIOBase) -> dict[dt.date, WeatherObs]:
    """Read a ``date,condition,temperature_c`` CSV into a date lookup."""
    if isinstance(source, (str, os.PathLike)):
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise MalformedFixture(f"cannot read weather fixture {source}: {exc}") from exc
    else:
        text = source.read()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != WEATHER_HEADER:
        raise MalformedFixture(f"weather fixture header must be {','.join(WEATHER_HEADER)}")
    table: dict[dt.date, WeatherObs] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise MalformedFixture(f"line {lineno}: expected 3 fields, got {len(row)}")
        try:
            date = dt.date.fromisoformat(row[0].strip())
            temp = float(row[2])
        except ValueError as exc:
            raise MalformedFixture(f"line {lineno}: {exc}") from exc
        if not np.isfinite(temp):
            raise MalformedFixture(f"line {lineno}: temperature must be finite")
        if date in table:
            raise MalformedFixture(f"line {lineno}: duplicate date {date}")
        table[date] = WeatherObs(row[1].strip(), temp)
    return table


def attach_weather(day: HourlyDay, fixtures) -> HourlyDay:
    """Return ``day`` with its date's weather, or unchanged if the fixture has none."""
    if not isinstance(fixtures, Mapping):
        fixtures = load_weather_fixture(fixtures)
    obs = fixtures.get(day.date)
    if obs is None:
        return day
    return replace(day, weather=obs)


def write_weather_fixture(table: Mapping[dt.date, WeatherObs]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(WEATHER_HEADER)
    for date in sorted(table):
        obs = table[date]
        writer.writerow([date.isoformat(), obs.condition, repr(float(obs.temperature))])
    return out.getvalue()
