"""Habit waveform: behavioral steady state over hour-of-week bins.

The grid is activity-category rows by 168 hour-of-week columns; each
cell holds the fraction of that hour spent in that category. Daily
occupancy acts as an impulse; exponential smoothing pulls the waveform
toward the schedule it keeps seeing.
"""
from __future__ import annotations

import io
import statistics
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .events import Personicle, StreamKind
from .ingest import ACTIVITY_VOCABULARY

N_BINS = 168  # 24 hours x 7 days, Monday hour 0 first
CLIP_EPS = 1e-9

_CATEGORY_INDEX = {cat: i for i, cat in enumerate(ACTIVITY_VOCABULARY)}


@dataclass(frozen=True)
class OccupancyGrid:
    values: np.ndarray  # shape (len(vocabulary), 168), each cell in [0, 1]

    def __post_init__(self) -> None:
        expected = (len(ACTIVITY_VOCABULARY), N_BINS)
        if self.values.shape != expected:
            raise ValidationError(f"grid shape {self.values.shape} != {expected}")
        if np.any(self.values < -CLIP_EPS) or np.any(self.values > 1 + CLIP_EPS):
            raise ValidationError("grid values must lie in [0, 1]")

    @classmethod
    def zeros(cls) -> "OccupancyGrid":
        return cls(values=np.zeros((len(ACTIVITY_VOCABULARY), N_BINS)))


def _merge_intervals(spans: list[tuple[float, float]]) -> list[tuple[float, float]]:
    merged: list[tuple[float, float]] = []
    for lo, hi in sorted(spans):
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


def daily_occupancy(p: Personicle, day: date) -> OccupancyGrid:
    """One day's 24 hour-of-week columns from the activity events.

    Overlapping same-category events are unioned before measuring;
    a bin whose different-category total exceeds 1 is clipped
    proportionally so occupancy stays a fraction of the hour.
    """
    day_start = datetime.combine(day, time.min, tzinfo=timezone.utc)
    day_end = day_start + timedelta(days=1)
    base_bin = day.weekday() * 24

    values = np.zeros((len(ACTIVITY_VOCABULARY), N_BINS))
    per_category: dict[str, list[tuple[float, float]]] = {}
    for ev in p.events:
        if ev.stream is not StreamKind.ACTIVITY or ev.category not in _CATEGORY_INDEX:
            continue
        lo = max(ev.start, day_start)
        hi = min(ev.effective_end, day_end)
        if hi <= lo:
            continue
        span = (
            (lo - day_start).total_seconds(),
            (hi - day_start).total_seconds(),
        )
        per_category.setdefault(ev.category, []).append(span)

    for category, spans in per_category.items():
        row = _CATEGORY_INDEX[category]
        for lo_s, hi_s in _merge_intervals(spans):
            first_hour = int(lo_s // 3600)
            last_hour = int((hi_s - 1e-9) // 3600)
            for hour in range(first_hour, min(last_hour, 23) + 1):
                overlap = min(hi_s, (hour + 1) * 3600) - max(lo_s, hour * 3600)
                if overlap > 0:
                    values[row, base_bin + hour] += overlap / 3600.0

    col_sums = values.sum(axis=0)
    over = col_sums > 1.0
    if np.any(over):
        values[:, over] /= col_sums[over]
    return OccupancyGrid(values=values)


@dataclass(frozen=True)
class HabitWaveform:
    grid: OccupancyGrid = field(default_factory=OccupancyGrid.zeros)
    alpha: float = 0.1
    updates_seen: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.alpha <= 1:
            raise ValidationError("alpha must lie in (0, 1]")


def update_waveform(h: HabitWaveform, x: OccupancyGrid) -> HabitWaveform:
    if h.grid.values.shape != x.values.shape:
        raise ValidationError("grid shapes differ")
    blended = (1 - h.alpha) * h.grid.values + h.alpha * x.values
    return HabitWaveform(
        grid=OccupancyGrid(values=blended),
        alpha=h.alpha,
        updates_seen=h.updates_seen + 1,
    )


def anomaly_score(h: HabitWaveform, x: OccupancyGrid) -> float:
    if h.grid.values.shape != x.values.shape:
        raise ValidationError("grid shapes differ")
    return float(np.abs(x.values - h.grid.values).sum())


def is_anomalous(history: Sequence[float], current: float, k: float = 3.0) -> bool | None:
    """None signals not-enough-data (history shorter than 7 scores)."""
    if len(history) < 7:
        return None
    mean = statistics.fmean(history)
    std = statistics.pstdev(history)
    return current > mean + k * std


def waveform_to_csv(h: HabitWaveform) -> str:
    buf = io.StringIO()
    bins = ",".join(f"h{i}" for i in range(N_BINS))
    buf.write(f"category,{bins}\n")
    for row, category in enumerate(ACTIVITY_VOCABULARY):
        cells = ",".join(f"{v:.6f}" for v in h.grid.values[row])
        buf.write(f"{category},{cells}\n")
    return buf.getvalue()


def week_occupancy(p: Personicle, week_start: date) -> OccupancyGrid:
    """Full-week grid: sum of the seven daily grids starting week_start.

    Daily grids populate disjoint weekday columns, so addition never
    collides; the waveform update consumes whole weeks so every column
    is refreshed each update.
    """
    total = np.zeros((len(ACTIVITY_VOCABULARY), N_BINS))
    for offset in range(7):
        total += daily_occupancy(p, week_start + timedelta(days=offset)).values
    col_sums = total.sum(axis=0)
    over = col_sums > 1.0
    if np.any(over):
        total[:, over] /= col_sums[over]
    return OccupancyGrid(values=total)


def day_anomaly_score(h: HabitWaveform, x_day: OccupancyGrid, weekday: int) -> float:
    """L1 distance restricted to one weekday's 24 columns."""
    cols = slice(weekday * 24, (weekday + 1) * 24)
    return float(np.abs(x_day.values[:, cols] - h.grid.values[:, cols]).sum())
