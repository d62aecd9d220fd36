"""File-based stand-ins for the five sensing channels.

Event logs are line-delimited JSON records with ISO-8601 UTC timestamps.
Parsing is total: every non-blank line becomes either an Event or a
structured reject with line number and reason.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Sequence

from .errors import CatalogError, ValidationError
from .events import Event, SENSOR_STREAMS, StreamKind, make_attrs

ACTIVITY_VOCABULARY: tuple[str, ...] = (
    "socializing",
    "relaxing",
    "prayer",
    "eating",
    "exercising",
    "watching_tv",
    "preparing_food",
    "sleeping",
    "housework",
    "shopping",
    "conversations",
    "computer_use",
    "working",
    "commuting",
    "toilet_use",
    "hospital_visit",
    "other",
)

_NUTRIENT_KEYS = ("carbs_g", "fat_g", "protein_g", "sugar_g", "kcal")


def activity_vocabulary() -> tuple[str, ...]:
    return ACTIVITY_VOCABULARY


@dataclass(frozen=True, slots=True)
class FoodAttrs:
    carbs_g: float = 0.0
    fat_g: float = 0.0
    protein_g: float = 0.0
    sugar_g: float = 0.0
    kcal: float = 0.0
    dish_id: str = ""

    def __post_init__(self) -> None:
        for key in _NUTRIENT_KEYS:
            if getattr(self, key) < 0:
                raise ValidationError(f"{key} must be >= 0")


@dataclass(frozen=True, slots=True)
class MoodMark:
    valence: int
    timestamp: datetime
    linked_event_id: str | None = None

    def __post_init__(self) -> None:
        if self.valence not in (-1, 0, 1):
            raise ValidationError(f"valence must be -1, 0, or +1, got {self.valence}")


@dataclass(frozen=True, slots=True)
class CatalogItem:
    dish_id: str
    venue_id: str
    food: FoodAttrs
    travel_minutes: float
    open_start_min: int  # minutes from midnight, half-open [start, end)
    open_end_min: int
    price: float

    def is_open(self, at: datetime) -> bool:
        m = at.hour * 60 + at.minute
        if self.open_start_min <= self.open_end_min:
            return self.open_start_min <= m < self.open_end_min
        return m >= self.open_start_min or m < self.open_end_min  # overnight wrap


@dataclass(frozen=True)
class ResourceCatalog:
    items: tuple[CatalogItem, ...] = ()

    def __post_init__(self) -> None:
        seen: set[tuple[str, str]] = set()
        for item in self.items:
            key = (item.venue_id, item.dish_id)
            if key in seen:
                raise CatalogError(f"duplicate catalog entry {key}")
            seen.add(key)
        ordered = tuple(sorted(self.items, key=lambda it: (it.venue_id, it.dish_id)))
        object.__setattr__(self, "items", ordered)

    def by_dish(self, dish_id: str) -> CatalogItem | None:
        for item in self.items:
            if item.dish_id == dish_id:
                return item
        return None


@dataclass(frozen=True, slots=True)
class EnvSnapshot:
    timestamp: datetime
    aqi: float
    pollen: float

    def __post_init__(self) -> None:
        if self.aqi < 0 or self.pollen < 0:
            raise ValidationError("environment values must be >= 0")


@dataclass(frozen=True, slots=True)
class RejectedLine:
    line_no: int
    reason: str
    raw: str


@dataclass
class ParseReport:
    events: list[Event] = field(default_factory=list)
    rejects: list[RejectedLine] = field(default_factory=list)
    blank_lines: int = 0
    total_lines: int = 0


def parse_timestamp(raw: str) -> datetime:
    ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        raise ValidationError(f"timestamp missing timezone: {raw!r}")
    return ts.astimezone(timezone.utc)


def _parse_record(rec: dict, line_no: int) -> Event:
    for key in ("stream", "category", "start", "subject"):
        if key not in rec:
            raise ValidationError(f"missing required key {key!r}")
    try:
        stream = StreamKind(rec["stream"])
    except ValueError:
        raise ValidationError(f"unknown stream {rec['stream']!r}") from None
    if stream not in SENSOR_STREAMS:
        raise ValidationError(f"stream {stream.value!r} not accepted from files")
    category = rec["category"]
    if stream is StreamKind.ACTIVITY and category not in ACTIVITY_VOCABULARY:
        raise ValidationError(f"activity category {category!r} not in vocabulary")
    start = parse_timestamp(rec["start"])
    end = parse_timestamp(rec["end"]) if rec.get("end") is not None else None
    if end is not None and end < start:
        raise ValidationError("interval inverted")
    attrs = rec.get("attrs") or {}
    if not isinstance(attrs, dict):
        raise ValidationError("attrs must be an object")
    for k, v in attrs.items():
        if not isinstance(v, (int, float, str)) or isinstance(v, bool):
            raise ValidationError(f"attr {k!r} must be number or string")
    if stream is StreamKind.MOOD:
        if attrs.get("valence") not in (-1, 0, 1):
            raise ValidationError("mood record needs valence in {-1, 0, +1}")
    if stream is StreamKind.FOOD:
        for key in _NUTRIENT_KEYS:
            value = attrs.get(key, 0)
            if not isinstance(value, (int, float)) or value < 0:
                raise ValidationError(f"food attr {key} must be >= 0")
    return Event(
        id=str(rec.get("id") or f"evt-{line_no:06d}"),
        stream=stream,
        category=category,
        start=start,
        end=end,
        attrs=make_attrs({k: (float(v) if isinstance(v, (int, float)) else v) for k, v in attrs.items()}),
        subject=str(rec["subject"]),
    )


def parse_event_lines(lines: Iterable[str]) -> ParseReport:
    report = ParseReport()
    for line_no, line in enumerate(lines, start=1):
        report.total_lines += 1
        stripped = line.strip()
        if not stripped:
            report.blank_lines += 1
            continue
        try:
            rec = json.loads(stripped)
            if not isinstance(rec, dict):
                raise ValidationError("record must be a JSON object")
            report.events.append(_parse_record(rec, line_no))
        except (json.JSONDecodeError, ValidationError, TypeError) as exc:
            report.rejects.append(RejectedLine(line_no, str(exc), stripped))
    return report


def parse_event_log(path: str) -> ParseReport:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_event_lines(fh)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _canonical_attr(value: float | str) -> float | int | str:
    # Integral floats render as ints so that parse -> serialize is
    # byte-stable regardless of whether the source wrote 40 or 40.0.
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return value


def event_to_record(ev: Event) -> dict:
    rec: dict = {
        "id": ev.id,
        "stream": ev.stream.value,
        "category": ev.category,
        "start": format_timestamp(ev.start),
        "subject": ev.subject,
    }
    if ev.end is not None:
        rec["end"] = format_timestamp(ev.end)
    if ev.attrs:
        rec["attrs"] = {k: _canonical_attr(v) for k, v in ev.attrs}
    return rec


def events_to_jsonl(events: Sequence[Event]) -> str:
    return "".join(json.dumps(event_to_record(ev), sort_keys=True) + "\n" for ev in events)


def nutrition_summary(events: Iterable[Event], window: tuple[datetime, datetime]) -> FoodAttrs:
    """Component-wise sums over food events with start in [t0, t1)."""
    t0, t1 = window
    if t1 < t0:
        raise ValidationError("window inverted")
    totals = dict.fromkeys(_NUTRIENT_KEYS, 0.0)
    for ev in events:
        if ev.stream is not StreamKind.FOOD:
            continue
        if not (t0 <= ev.start < t1):
            continue
        for key in _NUTRIENT_KEYS:
            value = ev.attr(key, 0.0)
            totals[key] += float(value) if isinstance(value, (int, float)) else 0.0
    return FoodAttrs(**totals)


def food_attrs_of(ev: Event) -> FoodAttrs:
    dish = ev.attr("dish_id", "")
    return FoodAttrs(
        carbs_g=float(ev.attr("carbs_g", 0.0) or 0.0),
        fat_g=float(ev.attr("fat_g", 0.0) or 0.0),
        protein_g=float(ev.attr("protein_g", 0.0) or 0.0),
        sugar_g=float(ev.attr("sugar_g", 0.0) or 0.0),
        kcal=float(ev.attr("kcal", 0.0) or 0.0),
        dish_id=str(dish) if dish else "",
    )


def mood_marks(events: Iterable[Event]) -> list[MoodMark]:
    marks = []
    for ev in events:
        if ev.stream is not StreamKind.MOOD:
            continue
        linked = ev.attr("linked_event_id")
        marks.append(
            MoodMark(
                valence=int(ev.attr("valence", 0)),
                timestamp=ev.start,
                linked_event_id=str(linked) if linked else None,
            )
        )
    return marks


def _parse_open_window(raw: str) -> tuple[int, int]:
    try:
        lo, hi = raw.split("-")
        h0, m0 = lo.split(":")
        h1, m1 = hi.split(":")
        return (int(h0) * 60 + int(m0), int(h1) * 60 + int(m1))
    except ValueError:
        raise CatalogError(f"bad open window {raw!r}, expected HH:MM-HH:MM") from None


def load_resource_catalog(path: str) -> ResourceCatalog:
    items = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                rec = json.loads(stripped)
                food = FoodAttrs(
                    carbs_g=float(rec.get("carbs_g", 0)),
                    fat_g=float(rec.get("fat_g", 0)),
                    protein_g=float(rec.get("protein_g", 0)),
                    sugar_g=float(rec.get("sugar_g", 0)),
                    kcal=float(rec.get("kcal", 0)),
                    dish_id=str(rec["dish_id"]),
                )
                open_lo, open_hi = _parse_open_window(rec["open"])
                travel = float(rec["travel_minutes"])
                price = float(rec.get("price", 0))
                if travel < 0 or price < 0:
                    raise CatalogError("travel_minutes and price must be >= 0")
                items.append(
                    CatalogItem(
                        dish_id=str(rec["dish_id"]),
                        venue_id=str(rec["venue_id"]),
                        food=food,
                        travel_minutes=travel,
                        open_start_min=open_lo,
                        open_end_min=open_hi,
                        price=price,
                    )
                )
            except (KeyError, ValueError, TypeError, json.JSONDecodeError,
                    ValidationError, CatalogError) as exc:
                raise CatalogError(f"catalog line {line_no}: {exc}") from None
    return ResourceCatalog(items=tuple(items))


def load_environment(path: str) -> tuple[EnvSnapshot, ...]:
    snaps = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                rec = json.loads(stripped)
                snaps.append(
                    EnvSnapshot(
                        timestamp=parse_timestamp(rec["timestamp"]),
                        aqi=float(rec["aqi"]),
                        pollen=float(rec.get("pollen", 0)),
                    )
                )
            except (KeyError, ValueError, TypeError, json.JSONDecodeError, ValidationError) as exc:
                raise CatalogError(f"environment line {line_no}: {exc}") from None
    return tuple(sorted(snaps, key=lambda s: s.timestamp))
