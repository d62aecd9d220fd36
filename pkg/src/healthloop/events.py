"""Events, the merged personicle, and interval-relation operators.

Point events are zero-length intervals so one operator family serves
both kinds. All timestamps are timezone-aware UTC at second resolution.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Iterable, Sequence

from .errors import ValidationError


class StreamKind(str, Enum):
    ACTIVITY = "activity"
    FOOD = "food"
    MOOD = "mood"
    MEDICAL = "medical"
    ENVIRONMENT = "environment"
    # Outputs of compound-event detection; never accepted from input files.
    DERIVED = "derived"


SENSOR_STREAMS = (
    StreamKind.ACTIVITY,
    StreamKind.FOOD,
    StreamKind.MOOD,
    StreamKind.MEDICAL,
    StreamKind.ENVIRONMENT,
)


def _require_utc(name: str, ts: datetime) -> datetime:
    if ts.tzinfo is None or ts.utcoffset() is None:
        raise ValidationError(f"{name} must be timezone-aware UTC: {ts!r}")
    return ts.astimezone(timezone.utc).replace(microsecond=0)


@dataclass(frozen=True, slots=True)
class Event:
    id: str
    stream: StreamKind
    category: str
    start: datetime
    end: datetime | None = None
    attrs: tuple[tuple[str, float | str], ...] = ()
    subject: str = ""

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("event id must be nonempty")
        if not self.category:
            raise ValidationError("category must be nonempty")
        if not isinstance(self.stream, StreamKind):
            raise ValidationError(f"unknown stream kind: {self.stream!r}")
        object.__setattr__(self, "start", _require_utc("start", self.start))
        if self.end is not None:
            object.__setattr__(self, "end", _require_utc("end", self.end))
            if self.end < self.start:
                raise ValidationError("interval inverted: end < start")
        keys = [k for k, _ in self.attrs]
        if len(keys) != len(set(keys)):
            raise ValidationError("attrs keys must be unique")

    @property
    def effective_end(self) -> datetime:
        return self.end if self.end is not None else self.start

    @property
    def interval(self) -> tuple[datetime, datetime]:
        return (self.start, self.effective_end)

    def attr(self, key: str, default: float | str | None = None) -> float | str | None:
        for k, v in self.attrs:
            if k == key:
                return v
        return default

    def sort_key(self) -> tuple[datetime, str, str]:
        return (self.start, self.stream.value, self.id)


def make_attrs(mapping: dict[str, float | str] | None) -> tuple[tuple[str, float | str], ...]:
    if not mapping:
        return ()
    return tuple(sorted(mapping.items()))


@dataclass(frozen=True)
class Personicle:
    subject: str
    events: tuple[Event, ...] = ()
    _starts: tuple[datetime, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for ev in self.events:
            if ev.subject != self.subject:
                raise ValidationError(
                    f"event {ev.id} subject {ev.subject!r} != personicle subject {self.subject!r}"
                )
        ordered = tuple(sorted(self.events, key=Event.sort_key))
        object.__setattr__(self, "events", ordered)
        object.__setattr__(self, "_starts", tuple(ev.start for ev in ordered))

    def __len__(self) -> int:
        return len(self.events)

    @property
    def span(self) -> tuple[datetime, datetime] | None:
        if not self.events:
            return None
        lo = self.events[0].start
        hi = max(ev.effective_end for ev in self.events)
        return (lo, hi)

    def index_range_by_start(self, lo: datetime, hi: datetime) -> range:
        """Indices of events with lo <= start <= hi (closed on both ends)."""
        i = bisect.bisect_left(self._starts, lo)
        j = bisect.bisect_right(self._starts, hi)
        return range(i, j)


class AllenRelation(str, Enum):
    BEFORE = "before"
    MEETS = "meets"
    OVERLAPS = "overlaps"
    STARTS = "starts"
    DURING = "during"
    FINISHES = "finishes"
    EQUALS = "equals"
    AFTER = "after"
    MET_BY = "met_by"
    OVERLAPPED_BY = "overlapped_by"
    STARTED_BY = "started_by"
    CONTAINS = "contains"
    FINISHED_BY = "finished_by"

    @property
    def inverse(self) -> "AllenRelation":
        return _INVERSE[self]


_INVERSE = {
    AllenRelation.BEFORE: AllenRelation.AFTER,
    AllenRelation.AFTER: AllenRelation.BEFORE,
    AllenRelation.MEETS: AllenRelation.MET_BY,
    AllenRelation.MET_BY: AllenRelation.MEETS,
    AllenRelation.OVERLAPS: AllenRelation.OVERLAPPED_BY,
    AllenRelation.OVERLAPPED_BY: AllenRelation.OVERLAPS,
    AllenRelation.STARTS: AllenRelation.STARTED_BY,
    AllenRelation.STARTED_BY: AllenRelation.STARTS,
    AllenRelation.DURING: AllenRelation.CONTAINS,
    AllenRelation.CONTAINS: AllenRelation.DURING,
    AllenRelation.FINISHES: AllenRelation.FINISHED_BY,
    AllenRelation.FINISHED_BY: AllenRelation.FINISHES,
    AllenRelation.EQUALS: AllenRelation.EQUALS,
}


def classify_interval_relation(a, b) -> AllenRelation:
    """Classify the temporal relation between two intervals.

    Accepts (start, end) pairs of any mutually comparable values.
    Zero-length intervals are legal; endpoint-equality relations take
    precedence so that every pair maps to exactly one relation and
    classify(a, b) is always the inverse of classify(b, a).
    """
    s1, e1 = a
    s2, e2 = b
    if e1 < s1 or e2 < s2:
        raise ValidationError("malformed interval: end < start")
    if s1 == s2:
        if e1 == e2:
            return AllenRelation.EQUALS
        return AllenRelation.STARTS if e1 < e2 else AllenRelation.STARTED_BY
    if e1 == e2:
        return AllenRelation.FINISHED_BY if s1 < s2 else AllenRelation.FINISHES
    if s1 < s2:
        if e1 < s2:
            return AllenRelation.BEFORE
        if e1 == s2:
            return AllenRelation.MEETS
        return AllenRelation.OVERLAPS if e1 < e2 else AllenRelation.CONTAINS
    # s1 > s2
    if s1 > e2:
        return AllenRelation.AFTER
    if s1 == e2:
        return AllenRelation.MET_BY
    return AllenRelation.DURING if e1 < e2 else AllenRelation.OVERLAPPED_BY


def merge_streams(streams: Sequence[Iterable[Event]]) -> Personicle:
    events: list[Event] = []
    for stream in streams:
        events.extend(stream)
    subjects = {ev.subject for ev in events}
    if len(subjects) > 1:
        raise ValidationError(f"mixed subjects in merge: {sorted(subjects)}")
    subject = subjects.pop() if subjects else ""
    return Personicle(subject=subject, events=tuple(events))


def co_occurrence(
    p: Personicle, cat_a: str, cat_b: str, window_s: float
) -> tuple[int, float]:
    """Count ordered pairs (eA, eB) with 0 <= eB.start - eA.start <= window.

    lift = count * N / (nA * nB * wFrac) where wFrac is the fraction of
    all ordered distinct event pairs whose start gap lies in the window;
    0 whenever any denominator term is 0.
    """
    if window_s <= 0:
        raise ValidationError("window must be positive")
    a_events = [ev for ev in p.events if ev.category == cat_a]
    b_starts = sorted(ev.start for ev in p.events if ev.category == cat_b)
    n_a, n_b = len(a_events), len(b_starts)
    count = 0
    for ea in a_events:
        lo = bisect.bisect_left(b_starts, ea.start)
        hi = ea.start.timestamp() + window_s
        j = lo
        while j < len(b_starts) and b_starts[j].timestamp() <= hi:
            count += 1
            j += 1
        if cat_a == cat_b:
            count -= 1  # eA pairs with itself otherwise

    n = len(p.events)
    if n < 2 or n_a == 0 or n_b == 0:
        return (count, 0.0)
    starts = [ev.start.timestamp() for ev in p.events]
    in_window = 0
    for i, ti in enumerate(starts):
        lo = bisect.bisect_left(starts, ti)
        j = lo
        hi = ti + window_s
        while j < len(starts) and starts[j] <= hi:
            if j != i:
                in_window += 1
            j += 1
    w_frac = in_window / (n * (n - 1))
    if w_frac == 0:
        return (count, 0.0)
    return (count, count * n / (n_a * n_b * w_frac))


@dataclass(frozen=True, slots=True)
class CompoundEventDef:
    name: str
    parts: tuple[tuple[StreamKind, str], ...]
    relation: AllenRelation | None = None
    window_s: float | None = None

    def __post_init__(self) -> None:
        if len(self.parts) < 2:
            raise ValidationError("compound definition needs at least 2 parts")
        if (self.relation is None) == (self.window_s is None):
            raise ValidationError("define exactly one of relation or window")
        if self.window_s is not None and self.window_s <= 0:
            raise ValidationError("window must be positive")


def _selector_matches(ev: Event, selector: tuple[StreamKind, str]) -> bool:
    return ev.stream == selector[0] and ev.category == selector[1]


def _find_window_match(
    events: Sequence[Event],
    used: list[bool],
    selectors: Sequence[tuple[StreamKind, str]],
    window_s: float,
    search_from: int,
) -> tuple[int, ...] | None:
    """Lexicographically smallest index tuple i1<i2<...<ik of unused
    events matching selectors in order with last.start - first.start
    <= window. Depth-first, smallest candidate first."""
    k = len(selectors)

    def extend(slot: int, prev: int, first_start: datetime) -> tuple[int, ...] | None:
        if slot == k:
            return ()
        for i in range(prev + 1, len(events)):
            if used[i] or not _selector_matches(events[i], selectors[slot]):
                continue
            if (events[i].start - first_start).total_seconds() > window_s:
                return None  # starts only grow from here
            rest = extend(slot + 1, i, first_start)
            if rest is not None:
                return (i, *rest)
        return None

    for i0 in range(search_from, len(events)):
        if used[i0] or not _selector_matches(events[i0], selectors[0]):
            continue
        rest = extend(1, i0, events[i0].start)
        if rest is not None:
            return (i0, *rest)
    return None


def _find_relation_match(
    events: Sequence[Event],
    used: list[bool],
    selectors: Sequence[tuple[StreamKind, str]],
    relation: AllenRelation,
) -> tuple[int, ...] | None:
    """Smallest index tuple (slot order, indices distinct but unordered)
    where each consecutive part pair satisfies the relation."""
    k = len(selectors)

    def extend(slot: int, chosen: tuple[int, ...]) -> tuple[int, ...] | None:
        if slot == k:
            return chosen
        for i in range(len(events)):
            if used[i] or i in chosen:
                continue
            if not _selector_matches(events[i], selectors[slot]):
                continue
            if slot > 0:
                prev = events[chosen[-1]]
                if classify_interval_relation(prev.interval, events[i].interval) is not relation:
                    continue
            result = extend(slot + 1, chosen + (i,))
            if result is not None:
                return result
        return None

    return extend(0, ())


def detect_compound_events(p: Personicle, cdef: CompoundEventDef) -> list[Event]:
    """Greedy left-to-right matching; no event participates in two matches."""
    events = p.events
    used = [False] * len(events)
    out: list[Event] = []
    search_from = 0
    while True:
        if cdef.window_s is not None:
            match = _find_window_match(events, used, cdef.parts, cdef.window_s, search_from)
        else:
            match = _find_relation_match(events, used, cdef.parts, cdef.relation)
        if match is None:
            break
        for i in match:
            used[i] = True
        if cdef.window_s is not None:
            search_from = match[0] + 1
        parts = [events[i] for i in match]
        start = min(ev.start for ev in parts)
        end = max(ev.effective_end for ev in parts)
        out.append(
            Event(
                id=f"{cdef.name}:{len(out)}",
                stream=StreamKind.DERIVED,
                category=cdef.name,
                start=start,
                end=end,
                attrs=make_attrs({"parts": ",".join(events[i].id for i in match)}),
                subject=p.subject,
            )
        )
    return out
