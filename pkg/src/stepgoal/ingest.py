"""Parsing and persistence of raw per-day tracker logs.

Two canonical day formats are understood:

* minute logs (``"source": "pedometer"``), one step count per minute of the day;
* storylines (``"source": "storyline"``), a handful of Location/Transition
  segments per day with start and end times.

Profiles carry the optional per-user step goal and demographics.
"""
from __future__ import annotations

import datetime as dt
import hashlib
import json
import os
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence, Union

from filelock import FileLock

from .exceptions import (
    ConflictingDuplicate,
    DuplicateMinute,
    InvalidValue,
    IoFailure,
    MalformedDocument,
    OverlappingSegments,
)

MINUTES_PER_DAY = 1440
SECONDS_PER_DAY = 86400
LOCATION = "location"
TRANSITION = "transition"
SEGMENT_KINDS = (LOCATION, TRANSITION)


@dataclass(frozen=True)
class MinuteSeries:
    user_id: str
    date: dt.date
    steps_per_minute: tuple[int, ...]

    def __post_init__(self):
        if len(self.steps_per_minute) != MINUTES_PER_DAY:
            raise InvalidValue(
                f"minute series must have {MINUTES_PER_DAY} entries, got {len(self.steps_per_minute)}"
            )
        if any(s < 0 for s in self.steps_per_minute):
            raise InvalidValue("negative step count in minute series")

    @property
    def source(self) -> str:
        return "pedometer"

    @property
    def total_steps(self) -> int:
        return sum(self.steps_per_minute)


@dataclass(frozen=True)
class Segment:
    """One storyline state. ``start``/``end`` are seconds since local midnight."""

    user_id: str
    date: dt.date
    kind: str
    start: int
    end: int
    steps: int
    place_name: str | None = None
    place_type: str | None = None

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise InvalidValue(f"unknown segment kind {self.kind!r}")
        if not 0 <= self.start < self.end <= SECONDS_PER_DAY:
            raise InvalidValue(
                f"segment must satisfy 0 <= start < end <= 24:00:00, got "
                f"{format_time(self.start)}-{format_time(self.end)}"
            )
        if self.steps < 0:
            raise InvalidValue("negative step count in segment")
        if self.kind != LOCATION and (self.place_name is not None or self.place_type is not None):
            raise InvalidValue("only location segments may carry a place")


@dataclass(frozen=True)
class StorylineDay:
    """The segments of one user-day, sorted by start time.

    Behaves as a read-only sequence of :class:`Segment` while keeping the
    user and date even when the day has no segments at all.
    """

    user_id: str
    date: dt.date
    segments: tuple[Segment, ...] = ()

    @property
    def source(self) -> str:
        return "storyline"

    @property
    def total_steps(self) -> int:
        return sum(s.steps for s in self.segments)

    def __iter__(self) -> Iterator[Segment]:
        return iter(self.segments)

    def __len__(self) -> int:
        return len(self.segments)

    def __getitem__(self, i):
        return self.segments[i]


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    step_goal: int | None = None
    gender: str | None = None
    age: int | None = None
    motivation: str | None = None

    def __post_init__(self):
        if self.step_goal is not None and self.step_goal <= 0:
            raise InvalidValue("step goal must be positive")
        if self.age is not None and self.age <= 0:
            raise InvalidValue("age must be positive")


DayRecord = Union[MinuteSeries, StorylineDay]


# -- time helpers -----------------------------------------------------------

def parse_time(text: Any) -> int:
    """``"HH:MM:SS"`` to seconds since midnight. ``"24:00:00"`` is accepted."""
    if not isinstance(text, str):
        raise MalformedDocument(f"time must be a string, got {text!r}")
    parts = text.split(":")
    if len(parts) != 3 or not all(p.isdigit() and len(p) == 2 for p in parts):
        raise MalformedDocument(f"time must be HH:MM:SS, got {text!r}")
    h, m, s = (int(p) for p in parts)
    if m > 59 or s > 59 or h > 24 or (h == 24 and (m or s)):
        raise InvalidValue(f"time out of range: {text!r}")
    return h * 3600 + m * 60 + s


def format_time(seconds: int) -> str:
    h, rem = divmod(seconds, 3600)
    m, s = divmod(rem, 60)
    return f"{h:02d}:{m:02d}:{s:02d}"


# -- parsing ----------------------------------------------------------------

def _load(document: str | bytes | dict) -> dict:
    if isinstance(document, dict):
        return document
    try:
        doc = json.loads(document)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedDocument("top-level JSON value must be an object")
    return doc


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _header(doc: dict, source: str) -> tuple[str, dt.date]:
    user = doc.get("user")
    if not isinstance(user, str) or not user:
        raise MalformedDocument("missing or empty 'user'")
    if doc.get("source") != source:
        raise MalformedDocument(f"expected source {source!r}, got {doc.get('source')!r}")
    try:
        date = dt.date.fromisoformat(doc.get("date"))
    except (TypeError, ValueError) as exc:
        raise MalformedDocument(f"bad 'date': {doc.get('date')!r}") from exc
    return user, date


def parse_fitbit_day(document: str | bytes | dict) -> MinuteSeries:
    """Parse a canonical minute log. Minutes absent from the log count zero steps."""
    doc = _load(document)
    user, date = _header(doc, "pedometer")
    entries = doc.get("entries")
    if not isinstance(entries, list):
        raise MalformedDocument("'entries' must be a list")
    steps = [0] * MINUTES_PER_DAY
    seen = set()
    for entry in entries:
        if not isinstance(entry, dict) or set(entry) != {"m", "steps"}:
            raise MalformedDocument(f"entry must be {{'m', 'steps'}}, got {entry!r}")
        m, n = entry["m"], entry["steps"]
        if not _is_int(m) or not _is_int(n):
            raise MalformedDocument(f"entry fields must be integers: {entry!r}")
        if not 0 <= m < MINUTES_PER_DAY:
            raise InvalidValue(f"minute index {m} outside 0..1439")
        if n < 0:
            raise InvalidValue(f"negative steps at minute {m}")
        if m in seen:
            raise DuplicateMinute(f"minute {m} appears twice")
        seen.add(m)
        steps[m] = n
    return MinuteSeries(user, date, tuple(steps))


def parse_moves_day(document: str | bytes | dict) -> StorylineDay:
    """Parse a canonical storyline day into segments sorted by start time.

    Gaps between segments are kept as gaps. Overlaps are rejected, and so are
    segments that would cross midnight (they must be split upstream).
    """
    doc = _load(document)
    user, date = _header(doc, "storyline")
    raw = doc.get("segments")
    if not isinstance(raw, list):
        raise MalformedDocument("'segments' must be a list")
    segments = []
    for item in raw:
        if not isinstance(item, dict):
            raise MalformedDocument(f"segment must be an object, got {item!r}")
        kind = item.get("kind")
        if kind not in SEGMENT_KINDS:
            raise MalformedDocument(f"segment kind must be one of {SEGMENT_KINDS}, got {kind!r}")
        extra = set(item) - {"kind", "start", "end", "steps", "place"}
        if extra:
            raise MalformedDocument(f"unexpected segment fields {sorted(extra)}")
        start, end = parse_time(item.get("start")), parse_time(item.get("end"))
        steps = item.get("steps")
        if not _is_int(steps):
            raise MalformedDocument(f"segment steps must be an integer, got {steps!r}")
        if end <= start:
            raise InvalidValue(f"segment end {item.get('end')} is not after start {item.get('start')}")
        if steps < 0:
            raise InvalidValue("negative segment steps")
        name = ptype = None
        if "place" in item:
            if kind != LOCATION:
                raise InvalidValue("a transition segment cannot carry a place")
            place = item["place"]
            if not isinstance(place, dict) or set(place) - {"name", "type"}:
                raise MalformedDocument(f"bad place object {place!r}")
            name, ptype = place.get("name"), place.get("type")
            for v in (name, ptype):
                if v is not None and not isinstance(v, str):
                    raise MalformedDocument(f"place fields must be strings: {place!r}")
        segments.append(Segment(user, date, kind, start, end, steps, name, ptype))
    segments.sort(key=lambda s: (s.start, s.end))
    for a, b in zip(segments, segments[1:]):
        if b.start < a.end:
            raise OverlappingSegments(
                f"{format_time(a.start)}-{format_time(a.end)} overlaps "
                f"{format_time(b.start)}-{format_time(b.end)}"
            )
    return StorylineDay(user, date, tuple(segments))


def parse_profile(document: str | bytes | dict) -> UserProfile:
    doc = _load(document)
    allowed = {"user", "goal", "gender", "age", "motivation"}
    if set(doc) - allowed:
        raise MalformedDocument(f"unexpected profile fields {sorted(set(doc) - allowed)}")
    user = doc.get("user")
    if not isinstance(user, str) or not user:
        raise MalformedDocument("missing or empty 'user'")
    for key in ("goal", "age"):
        if doc.get(key) is not None and not _is_int(doc[key]):
            raise MalformedDocument(f"{key!r} must be an integer")
    for key in ("gender", "motivation"):
        if doc.get(key) is not None and not isinstance(doc[key], str):
            raise MalformedDocument(f"{key!r} must be a string")
    return UserProfile(user, doc.get("goal"), doc.get("gender"), doc.get("age"), doc.get("motivation"))


def parse_document(document: str | bytes | dict) -> DayRecord | UserProfile:
    """Dispatch on the ``source`` field; documents without one are profiles."""
    doc = _load(document)
    source = doc.get("source")
    if source == "pedometer":
        return parse_fitbit_day(doc)
    if source == "storyline":
        return parse_moves_day(doc)
    if source is None and "date" not in doc:
        return parse_profile(doc)
    raise MalformedDocument(f"unrecognised document source {source!r}")


# -- serialization ----------------------------------------------------------

def to_document(record: DayRecord | UserProfile) -> dict:
    if isinstance(record, MinuteSeries):
        return {
            "user": record.user_id,
            "date": record.date.isoformat(),
            "source": "pedometer",
            "entries": [{"m": m, "steps": s} for m, s in enumerate(record.steps_per_minute) if s],
        }
    if isinstance(record, StorylineDay):
        segs = []
        for s in record.segments:
            item: dict[str, Any] = {
                "kind": s.kind,
                "start": format_time(s.start),
                "end": format_time(s.end),
                "steps": s.steps,
            }
            if s.place_name is not None or s.place_type is not None:
                place = {}
                if s.place_name is not None:
                    place["name"] = s.place_name
                if s.place_type is not None:
                    place["type"] = s.place_type
                item["place"] = place
            segs.append(item)
        return {"user": record.user_id, "date": record.date.isoformat(), "source": "storyline", "segments": segs}
    if isinstance(record, UserProfile):
        doc: dict[str, Any] = {"user": record.user_id}
        for key, value in (("goal", record.step_goal), ("gender", record.gender),
                           ("age", record.age), ("motivation", record.motivation)):
            if value is not None:
                doc[key] = value
        return doc
    raise TypeError(f"cannot serialize {type(record).__name__}")


def serialize(record: DayRecord | UserProfile) -> str:
    """Canonical JSON text: sorted keys, compact separators, trailing newline."""
    return json.dumps(to_document(record), sort_keys=True, separators=(",", ":")) + "\n"


# -- store ------------------------------------------------------------------

def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _as_record(item) -> DayRecord:
    if isinstance(item, (MinuteSeries, StorylineDay)):
        return item
    segments = tuple(item)
    if not segments:
        raise InvalidValue("an empty segment list carries no user/date; pass a StorylineDay")
    first = segments[0]
    if any((s.user_id, s.date) != (first.user_id, first.date) for s in segments):
        raise InvalidValue("segments of one record must share user and date")
    return StorylineDay(first.user_id, first.date, tuple(sorted(segments, key=lambda s: s.start)))


@dataclass
class DayStore:
    """Directory-backed store of canonical day files.

    Layout: ``days/<user>/<date>.json``, ``profiles/<user>.json`` and an
    ``index.json`` mapping ``<user>/<date>`` to source and content digest.
    Writes are serialized by a process-level lock file plus a thread lock.
    """

    root: Path
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        self.root = Path(self.root)

    @property
    def index_path(self) -> Path:
        return self.root / "index.json"

    def _day_path(self, user: str, date: dt.date) -> Path:
        return self.root / "days" / user / f"{date.isoformat()}.json"

    def _profile_path(self, user: str) -> Path:
        return self.root / "profiles" / f"{user}.json"

    def read_index(self) -> dict[str, dict]:
        if not self.index_path.exists():
            return {}
        try:
            return json.loads(self.index_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise IoFailure(f"unreadable index {self.index_path}: {exc}") from exc

    def store_days(self, records: Iterable, overwrite: bool = False) -> int:
        """Upsert day records keyed by (user, date, source).

        Returns the number of records present in the store after the call
        among those passed in; re-storing identical content is a no-op.
        """
        records = [_as_record(r) for r in records]
        for r in records:
            _check_name(r.user_id)
        self._ensure_root()
        with self._lock, FileLock(str(self.root / ".lock")):
            index = self.read_index()
            pending: dict[str, tuple[DayRecord, str, str]] = {}
            for rec in records:
                key = f"{rec.user_id}/{rec.date.isoformat()}"
                text = serialize(rec)
                digest = hashlib.sha256(text.encode()).hexdigest()
                if key in pending:
                    prior = pending[key][2]
                else:
                    prior = index.get(key, {}).get("sha256")
                if prior is not None and prior != digest and not overwrite:
                    raise ConflictingDuplicate(f"{key} already stored with different content")
                pending[key] = (rec, text, digest)
            changed = False
            for key, (rec, text, digest) in pending.items():
                if index.get(key, {}).get("sha256") == digest:
                    continue
                atomic_write_text(self._day_path(rec.user_id, rec.date), text)
                index[key] = {"source": rec.source, "sha256": digest}
                changed = True
            if changed or not self.index_path.exists():
                atomic_write_text(self.index_path, json.dumps(index, sort_keys=True, indent=1) + "\n")
            return len(pending)

    def store_profiles(self, profiles: Iterable[UserProfile], overwrite: bool = True) -> int:
        profiles = list(profiles)
        self._ensure_root()
        with self._lock, FileLock(str(self.root / ".lock")):
            for p in profiles:
                _check_name(p.user_id)
                path = self._profile_path(p.user_id)
                text = serialize(p)
                if path.exists():
                    old = path.read_text(encoding="utf-8")
                    if old == text:
                        continue
                    if not overwrite:
                        raise ConflictingDuplicate(f"profile {p.user_id} differs from stored copy")
                atomic_write_text(path, text)
        return len(profiles)

    def _ensure_root(self) -> None:
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IoFailure(f"cannot create store {self.root}: {exc}") from exc

    def load_days(self) -> list[DayRecord]:
        """All stored days, ordered by (user, date)."""
        out = []
        for key in sorted(self.read_index()):
            user, date = key.split("/")
            path = self._day_path(user, dt.date.fromisoformat(date))
            try:
                text = path.read_text(encoding="utf-8")
            except OSError as exc:
                raise IoFailure(f"cannot read {path}: {exc}") from exc
            out.append(parse_document(text))
        return out

    def load_profiles(self) -> dict[str, UserProfile]:
        directory = self.root / "profiles"
        if not directory.is_dir():
            return {}
        profiles = {}
        for path in sorted(directory.glob("*.json")):
            p = parse_profile(path.read_text(encoding="utf-8"))
            profiles[p.user_id] = p
        return profiles


def _check_name(user: str) -> None:
    if not user or "/" in user or "\\" in user or user in (".", "..") or user.startswith("."):
        raise InvalidValue(f"user id {user!r} is not usable as a store path component")


def store_days(records: Sequence, store_path: str | os.PathLike, overwrite: bool = False) -> int:
    return DayStore(Path(store_path)).store_days(records, overwrite=overwrite)
