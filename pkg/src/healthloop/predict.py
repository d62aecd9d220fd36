"""Predictions over the personicle.

Partial-pooled personal estimates, sequential adverse-event rules,
the decaying risk accumulator, mood-derived preferences, the layered
parameter cascade, and the short-horizon mood-shift alert.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Iterable, Mapping, Sequence

from .errors import ParameterConflictError, ValidationError
from .events import Event, Personicle
from .ingest import MoodMark

# ---------------------------------------------------------------- pooling


@dataclass(frozen=True, slots=True)
class PopulationPrior:
    mu0: float
    tau2: float
    sigma2: float

    def __post_init__(self) -> None:
        if self.tau2 <= 0 or self.sigma2 <= 0:
            raise ValidationError("tau2 and sigma2 must be > 0")


def pool_estimate(obs: Sequence[float], prior: PopulationPrior) -> tuple[float, float]:
    """Conjugate normal pooling of individual observations with a
    population prior; n = 0 returns the prior untouched."""
    n = len(obs)
    if n == 0:
        return (prior.mu0, prior.tau2)
    ybar = math.fsum(obs) / n
    precision = n / prior.sigma2 + 1.0 / prior.tau2
    mean = (n * ybar / prior.sigma2 + prior.mu0 / prior.tau2) / precision
    return (mean, 1.0 / precision)


# ------------------------------------------------------------ rule mining


@dataclass(frozen=True, slots=True)
class PatternRule:
    antecedent: tuple[str, ...]
    window_s: float
    consequent: str
    support: int
    hits: int
    confidence: float
    lift: float


def _window_occurrences(
    events: Sequence[Event], seq: Sequence[str], window_s: float
) -> list[tuple[int, ...]]:
    """Greedy leftmost non-overlapping occurrences of seq as an in-order
    category subsequence with last.start - first.start <= window."""
    k = len(seq)
    used = [False] * len(events)
    out: list[tuple[int, ...]] = []

    def extend(slot: int, prev: int, first_start: datetime) -> tuple[int, ...] | None:
        if slot == k:
            return ()
        for i in range(prev + 1, len(events)):
            if used[i] or events[i].category != seq[slot]:
                continue
            if (events[i].start - first_start).total_seconds() > window_s:
                return None
            rest = extend(slot + 1, i, first_start)
            if rest is not None:
                return (i, *rest)
        return None

    search_from = 0
    while True:
        match = None
        for i0 in range(search_from, len(events)):
            if used[i0] or events[i0].category != seq[0]:
                continue
            rest = extend(1, i0, events[i0].start)
            if rest is not None:
                match = (i0, *rest)
                break
        if match is None:
            return out
        for i in match:
            used[i] = True
        out.append(match)
        search_from = match[0] + 1


def _count_hits(
    events: Sequence[Event],
    occurrences: Sequence[tuple[int, ...]],
    consequent: str,
    delta_s: float,
) -> int:
    hits = 0
    for occ in occurrences:
        anchor = occ[-1]
        t0 = events[anchor].start
        for j in range(anchor + 1, len(events)):
            gap = (events[j].start - t0).total_seconds()
            if gap > delta_s:
                break
            if events[j].category == consequent:
                hits += 1
                break
    return hits


def mine_rules(
    personicles: Sequence[Personicle],
    consequent: str,
    window_s: float,
    delta_s: float,
    min_support: int = 1,
    max_len: int = 3,
) -> list[PatternRule]:
    """Sequential rules: support counts greedy non-overlapping windowed
    occurrences pooled across personicles; a hit is an occurrence whose
    anchor (last element) is followed by the consequent within delta.
    Confidence is Laplace-smoothed; lift divides it by the smoothed
    base rate of the consequent.
    """
    if window_s <= 0 or delta_s <= 0:
        raise ValidationError("window and delta must be positive")
    if not 1 <= max_len <= 3:
        raise ValidationError("max_len must be 1..3")

    alphabet = sorted({ev.category for p in personicles for ev in p.events})
    n_total = sum(len(p.events) for p in personicles)
    n_consequent = sum(
        1 for p in personicles for ev in p.events if ev.category == consequent
    )
    base_rate = (n_consequent + 1) / (n_total + 2)

    rules: list[PatternRule] = []
    # Levelwise by existence: an extension can only occur where its
    # prefix occurs, so zero-occurrence sequences prune exactly.
    level: list[tuple[str, ...]] = [()]
    for _ in range(max_len):
        next_level: list[tuple[str, ...]] = []
        for prefix in level:
            for cat in alphabet:
                seq = prefix + (cat,)
                per_p = [_window_occurrences(p.events, seq, window_s) for p in personicles]
                support = sum(len(occ) for occ in per_p)
                if support == 0:
                    continue
                next_level.append(seq)
                hits = sum(
                    _count_hits(p.events, occ, consequent, delta_s)
                    for p, occ in zip(personicles, per_p)
                )
                if support >= min_support:
                    confidence = (hits + 1) / (support + 2)
                    rules.append(
                        PatternRule(
                            antecedent=seq,
                            window_s=window_s,
                            consequent=consequent,
                            support=support,
                            hits=hits,
                            confidence=confidence,
                            lift=confidence / base_rate,
                        )
                    )
        level = next_level
    rules.sort(key=lambda r: (-r.lift, -r.confidence, r.antecedent))
    return rules


# ------------------------------------------------------------- risk model

RISK_FEATURES = (
    "high_sugar_meals",
    "high_fat_meals",
    "sedentary_hours",
    "negative_mood",
    "aqi_excess",
    "exercise_minutes",
)

DEFAULT_RISK_WEIGHTS = {
    "high_sugar_meals": 1.0,
    "high_fat_meals": 1.0,
    "sedentary_hours": 0.1,
    "negative_mood": 0.5,
    "aqi_excess": 0.5,
    "exercise_minutes": -0.05,
}

SUGAR_MEAL_THRESHOLD_G = 25.0
FAT_MEAL_THRESHOLD_G = 30.0
AQI_BASELINE = 100.0

# Activities that interrupt sitting when computing sedentary hours.
ACTIVE_CATEGORIES = frozenset(
    {"exercising", "commuting", "housework", "shopping", "preparing_food"}
)


@dataclass(frozen=True, slots=True)
class DayFeatures:
    high_sugar_meals: float = 0.0
    high_fat_meals: float = 0.0
    sedentary_hours: float = 0.0
    negative_mood: float = 0.0
    aqi_excess: float = 0.0
    exercise_minutes: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in RISK_FEATURES}


@dataclass(frozen=True)
class RiskModel:
    r: float = 0.0
    beta: float = 0.9
    weights: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_RISK_WEIGHTS))

    def __post_init__(self) -> None:
        if not 0 <= self.beta < 1:
            raise ValidationError("beta must lie in [0, 1)")
        if self.r < 0:
            raise ValidationError("risk accumulator must be >= 0")
        if self.weights.get("exercise_minutes", 0.0) > 0:
            raise ValidationError("exercise weight must be <= 0")


def risk_update(model: RiskModel, features: DayFeatures) -> RiskModel:
    contribution = math.fsum(
        model.weights.get(name, 0.0) * value for name, value in features.as_dict().items()
    )
    r_next = max(0.0, model.beta * model.r + contribution)
    return RiskModel(r=r_next, beta=model.beta, weights=model.weights)


def day_features(
    events: Sequence[Event],
    day_start: datetime,
    aqi: float = 0.0,
) -> DayFeatures:
    """Extract one day's risk features from that day's events.

    Sedentary hours are what remains of the day after sleep and the
    active categories; meals count against the per-meal sugar and fat
    thresholds.
    """
    day_end = day_start + timedelta(days=1)
    high_sugar = 0
    high_fat = 0
    negative = 0
    exercise_min = 0.0
    active_hours = 0.0
    sleep_hours = 0.0
    for ev in events:
        if not (day_start <= ev.start < day_end):
            continue
        if ev.stream.value == "food":
            sugar = float(ev.attr("sugar_g", 0.0) or 0.0)
            fat = float(ev.attr("fat_g", 0.0) or 0.0)
            if sugar > SUGAR_MEAL_THRESHOLD_G:
                high_sugar += 1
            if fat > FAT_MEAL_THRESHOLD_G:
                high_fat += 1
        elif ev.stream.value == "mood":
            if int(ev.attr("valence", 0)) < 0:
                negative += 1
        elif ev.stream.value == "activity":
            hours = (ev.effective_end - ev.start).total_seconds() / 3600.0
            if ev.category == "sleeping":
                sleep_hours += hours
            elif ev.category in ACTIVE_CATEGORIES:
                active_hours += hours
                if ev.category == "exercising":
                    exercise_min += hours * 60.0
    sedentary = max(0.0, 24.0 - sleep_hours - active_hours)
    return DayFeatures(
        high_sugar_meals=float(high_sugar),
        high_fat_meals=float(high_fat),
        sedentary_hours=sedentary,
        negative_mood=float(negative),
        aqi_excess=max(0.0, aqi - AQI_BASELINE) / AQI_BASELINE,
        exercise_minutes=exercise_min,
    )


# ------------------------------------------------------------ preferences


@dataclass(frozen=True)
class PreferenceModel:
    scores: Mapping[str, float] = field(default_factory=dict)
    prior_strength: float = 2.0

    def score(self, item: str) -> float:
        return self.scores.get(item, 0.5)


def _item_of(ev: Event) -> str:
    dish = ev.attr("dish_id")
    return str(dish) if dish else ev.category


def preference_scores(
    p: Personicle, marks: Iterable[MoodMark], s: float = 2.0
) -> PreferenceModel:
    """Smoothed mean of mapped valences per item; marks without a linked
    event attach to the nearest event within 30 minutes or are dropped."""
    if s <= 0:
        raise ValidationError("prior strength must be > 0")
    by_id = {ev.id: ev for ev in p.events}
    candidates = [ev for ev in p.events if ev.stream.value != "mood"]
    tallies: dict[str, list[float]] = {}
    for mark in marks:
        event = by_id.get(mark.linked_event_id) if mark.linked_event_id else None
        if event is None:
            best: Event | None = None
            best_gap = timedelta(minutes=30)  # attach radius; ties keep the earlier event
            for ev in candidates:
                gap = abs(ev.start - mark.timestamp)
                if gap <= best_gap and (best is None or gap < best_gap):
                    best, best_gap = ev, gap
            event = best
        if event is None:
            continue
        mapped = {-1: 0.0, 0: 0.5, 1: 1.0}[mark.valence]
        tallies.setdefault(_item_of(event), []).append(mapped)
    scores = {
        item: (math.fsum(vals) + s * 0.5) / (len(vals) + s)
        for item, vals in tallies.items()
    }
    return PreferenceModel(scores=scores, prior_strength=s)


def habitual_flags(p: Personicle, min_repeats: int = 3) -> dict[str, bool]:
    """An item is habitual when it recurs at least min_repeats times;
    surfaced for the recommender's motivation term (weight 0 by default)."""
    counts: dict[str, int] = {}
    for ev in p.events:
        if ev.stream.value in ("food", "activity"):
            item = _item_of(ev)
            counts[item] = counts.get(item, 0) + 1
    return {item: n >= min_repeats for item, n in counts.items()}


# -------------------------------------------------------------- cascade

DEFAULT_LAYER1: dict[str, float] = {
    # Non-clinical config defaults; the universal base layer.
    "glucose_low": 70.0,
    "glucose_high": 180.0,
    "carbs_low": 20.0,
    "carbs_high": 60.0,
    "sugar_max": 25.0,
    "fat_max": 30.0,
    "kcal_low": 300.0,
    "kcal_high": 800.0,
}

KNOWN_PARAMETERS = tuple(DEFAULT_LAYER1)


@dataclass(frozen=True)
class ParameterCascade:
    layer1: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_LAYER1))
    layer2: Mapping[str, Mapping[str, float]] = field(default_factory=dict)  # tag -> overrides
    layer3: Mapping[str, float] = field(default_factory=dict)
    layer4: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        missing = [p for p in KNOWN_PARAMETERS if p not in self.layer1]
        if missing:
            raise ValidationError(f"layer1 must be total; missing {missing}")
        for layer_name, layer in (
            ("layer1", self.layer1),
            ("layer3", self.layer3),
            ("layer4", self.layer4),
        ):
            for param in layer:
                if param not in KNOWN_PARAMETERS:
                    raise ValidationError(f"{layer_name}: unknown parameter {param!r}")
        for tag, overrides in self.layer2.items():
            for param in overrides:
                if param not in KNOWN_PARAMETERS:
                    raise ValidationError(f"layer2[{tag}]: unknown parameter {param!r}")


def resolve_parameters(
    cascade: ParameterCascade, profile_tags: Iterable[str]
) -> dict[str, float]:
    """Highest defined layer wins per parameter; layer2 is filtered to
    the profile's tags and two matching tags must not disagree."""
    tags = set(profile_tags)
    layer2_merged: dict[str, tuple[str, float]] = {}
    for tag in sorted(tags):
        for param, value in cascade.layer2.get(tag, {}).items():
            if param in layer2_merged and layer2_merged[param][1] != value:
                other_tag = layer2_merged[param][0]
                raise ParameterConflictError(
                    f"tags {other_tag!r} and {tag!r} disagree on {param!r}"
                )
            layer2_merged[param] = (tag, value)

    resolved = dict(cascade.layer1)
    resolved.update({p: v for p, (_, v) in layer2_merged.items()})
    resolved.update(cascade.layer3)
    resolved.update(cascade.layer4)
    return resolved


# ------------------------------------------------------------ mood shift

MOOD_SHIFT_DROP = 1.5
MOOD_RECENT_HOURS = 6
MOOD_BASELINE_DAYS = 7


def mood_shift_alert(marks: Sequence[MoodMark], now: datetime | None = None) -> bool:
    """True when the mean valence of the last 6 hours sits at least 1.5
    below the same-hours mean of the prior 7 days. Missing data on
    either side reads as no alert."""
    if not marks:
        return False
    if now is None:
        now = max(m.timestamp for m in marks)
    recent_lo = now - timedelta(hours=MOOD_RECENT_HOURS)
    recent = [m.valence for m in marks if recent_lo < m.timestamp <= now]
    if not recent:
        return False
    baseline: list[int] = []
    for day in range(1, MOOD_BASELINE_DAYS + 1):
        hi = now - timedelta(days=day)
        lo = hi - timedelta(hours=MOOD_RECENT_HOURS)
        baseline.extend(m.valence for m in marks if lo < m.timestamp <= hi)
    if not baseline:
        return False
    recent_mean = math.fsum(recent) / len(recent)
    baseline_mean = math.fsum(baseline) / len(baseline)
    return (baseline_mean - recent_mean) >= MOOD_SHIFT_DROP
