"""Bundled scenarios: a weekday commute-lunch routine and a festive
wedding weekend.

Schedules are fully determined by (name, seed); the arm flag never
changes the schedule, only whether the recommender runs.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from typing import Mapping

from .errors import ValidationError
from .events import Event, StreamKind, make_attrs
from .ingest import CatalogItem, EnvSnapshot, FoodAttrs, ResourceCatalog

SCENARIO_NAMES = ("commute_lunch", "wedding_weekend")
DEFAULT_HORIZON = {"commute_lunch": 14, "wedding_weekend": 10}
SUBJECT = "p001"

# Monday starts so hour-of-week bins line up with calendar weekdays.
COMMUTE_START = date(2017, 3, 6)
WEDDING_START = date(2017, 5, 1)

HOME_DISHES: Mapping[str, FoodAttrs] = {
    "oatmeal_bowl": FoodAttrs(35, 6, 10, 12, 320, "oatmeal_bowl"),
    "packed_lunch": FoodAttrs(45, 15, 25, 10, 560, "packed_lunch"),
    "home_dinner": FoodAttrs(55, 18, 30, 10, 650, "home_dinner"),
    "weekend_salad": FoodAttrs(30, 12, 20, 8, 420, "weekend_salad"),
    "wedding_brunch": FoodAttrs(80, 38, 25, 45, 950, "wedding_brunch"),
    "feast_lunch": FoodAttrs(110, 60, 40, 55, 1400, "feast_lunch"),
    "wedding_cake": FoodAttrs(70, 25, 6, 60, 680, "wedding_cake"),
    "feast_dinner": FoodAttrs(100, 55, 45, 40, 1350, "feast_dinner"),
}

LUNCH_CATALOG = ResourceCatalog(
    items=(
        CatalogItem("garden_salad_chicken", "salad_place", FoodAttrs(25, 14, 28, 6, 410, "garden_salad_chicken"), 12.0, 11 * 60, 15 * 60, 11.0),
        CatalogItem("grilled_salmon_bowl", "salad_place", FoodAttrs(40, 18, 32, 8, 520, "grilled_salmon_bowl"), 12.0, 11 * 60, 15 * 60, 12.5),
        CatalogItem("quinoa_veggie_bowl", "salad_place", FoodAttrs(45, 12, 18, 10, 480, "quinoa_veggie_bowl"), 12.0, 11 * 60, 15 * 60, 10.0),
        CatalogItem("tasty_burger_combo", "burger_joint", FoodAttrs(145, 52, 35, 86, 1450, "tasty_burger_combo"), 8.0, 10 * 60, 22 * 60, 9.5),
        CatalogItem("fried_chicken_box", "food_court", FoodAttrs(90, 48, 40, 18, 1100, "fried_chicken_box"), 10.0, 10 * 60, 21 * 60, 8.5),
        CatalogItem("sugar_smoothie", "food_court", FoodAttrs(68, 4, 3, 62, 300, "sugar_smoothie"), 10.0, 9 * 60, 18 * 60, 6.0),
    )
)

# (P(+1), P(0)) per dish for the post-lunch mood draw; remainder is -1.
MOOD_AFFINITY: Mapping[str, tuple[float, float]] = {
    "tasty_burger_combo": (0.60, 0.30),
    "fried_chicken_box": (0.55, 0.30),
    "sugar_smoothie": (0.60, 0.30),
    "garden_salad_chicken": (0.50, 0.40),
    "grilled_salmon_bowl": (0.55, 0.35),
    "quinoa_veggie_bowl": (0.50, 0.40),
}
DEFAULT_AFFINITY = (0.40, 0.40)


@dataclass(frozen=True, slots=True)
class DecisionPoint:
    at: datetime
    kind: str
    default_dish: str
    travel_budget_min: float


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    arm: str
    horizon_days: int
    start: datetime
    subject: str
    events: tuple[Event, ...]
    decision_points: tuple[DecisionPoint, ...]
    catalog: ResourceCatalog
    env: tuple[EnvSnapshot, ...]
    mood_affinity: Mapping[str, tuple[float, float]] = field(default_factory=dict)


class _Builder:
    def __init__(self, start_day: date, subject: str):
        self.start = datetime.combine(start_day, time.min, tzinfo=timezone.utc)
        self.subject = subject
        self.events: list[Event] = []
        self.env: list[EnvSnapshot] = []
        self.decisions: list[DecisionPoint] = []
        self._n = 0

    def _ts(self, day: int, minutes: float) -> datetime:
        return self.start + timedelta(days=day, minutes=minutes)

    def _next_id(self, prefix: str) -> str:
        self._n += 1
        return f"{prefix}-{self._n:04d}"

    def activity(self, day: int, category: str, start_min: float, end_min: float) -> None:
        self.events.append(
            Event(
                id=self._next_id("act"),
                stream=StreamKind.ACTIVITY,
                category=category,
                start=self._ts(day, start_min),
                end=self._ts(day, end_min),
                subject=self.subject,
            )
        )

    def meal(self, day: int, dish: str, at_min: float) -> None:
        food = HOME_DISHES[dish]
        self.events.append(
            Event(
                id=self._next_id("meal"),
                stream=StreamKind.FOOD,
                category="meal",
                start=self._ts(day, at_min),
                attrs=make_attrs(
                    {
                        "dish_id": food.dish_id,
                        "carbs_g": food.carbs_g,
                        "fat_g": food.fat_g,
                        "protein_g": food.protein_g,
                        "sugar_g": food.sugar_g,
                        "kcal": food.kcal,
                    }
                ),
                subject=self.subject,
            )
        )

    def mood(self, day: int, valence: int, at_min: float) -> None:
        self.events.append(
            Event(
                id=self._next_id("mood"),
                stream=StreamKind.MOOD,
                category="mood_mark",
                start=self._ts(day, at_min),
                attrs=make_attrs({"valence": valence}),
                subject=self.subject,
            )
        )

    def snapshot(self, day: int, aqi: float, pollen: float) -> None:
        self.env.append(
            EnvSnapshot(timestamp=self._ts(day, 8 * 60), aqi=aqi, pollen=pollen)
        )

    def decision(self, day: int, at_min: float, default_dish: str, budget: float) -> None:
        self.decisions.append(
            DecisionPoint(
                at=self._ts(day, at_min),
                kind="lunch",
                default_dish=default_dish,
                travel_budget_min=budget,
            )
        )


def _commute_lunch(seed: int, horizon_days: int) -> _Builder:
    rng = random.Random(f"{seed}:commute_lunch")
    b = _Builder(COMMUTE_START, SUBJECT)
    for day in range(horizon_days):
        jb = rng.randint(-10, 10)
        jd = rng.randint(-10, 10)
        jw = rng.randint(-10, 10)
        aqi = round(45 + rng.random() * 20, 1)
        pollen = round(10 + rng.random() * 20, 1)
        b.snapshot(day, aqi, pollen)
        weekday = (COMMUTE_START + timedelta(days=day)).weekday()
        if weekday < 5:
            b.activity(day, "sleeping", 0, 7 * 60)
            b.meal(day, "oatmeal_bowl", 7 * 60 + 15 + jb)
            b.activity(day, "commuting", 8 * 60, 8 * 60 + 45)
            b.activity(day, "working", 9 * 60, 12 * 60 + 30)
            b.decision(day, 12 * 60 + 30, "tasty_burger_combo", 30.0)
            b.activity(day, "working", 13 * 60 + 30, 17 * 60 + 30)
            b.activity(day, "commuting", 17 * 60 + 30, 18 * 60 + 15)
            if weekday in (0, 2, 4):
                walk = 18 * 60 + 30 + jw
                b.activity(day, "exercising", walk, walk + 30)
            b.meal(day, "home_dinner", 19 * 60 + 30 + jd)
            b.activity(day, "watching_tv", 20 * 60 + 30, 22 * 60 + 30)
        else:
            b.activity(day, "sleeping", 0, 8 * 60)
            b.meal(day, "oatmeal_bowl", 9 * 60 + jb)
            b.activity(day, "housework", 10 * 60, 11 * 60)
            b.activity(day, "relaxing", 11 * 60, 12 * 60 + 30)
            b.meal(day, "weekend_salad", 12 * 60 + 30)
            b.activity(day, "relaxing", 14 * 60, 17 * 60)
            b.meal(day, "home_dinner", 19 * 60 + jd)
            b.activity(day, "watching_tv", 20 * 60, 22 * 60 + 30)
    return b


def _wedding_weekend(seed: int, horizon_days: int) -> _Builder:
    rng = random.Random(f"{seed}:wedding_weekend")
    b = _Builder(WEDDING_START, SUBJECT)
    for day in range(horizon_days):
        jb = rng.randint(-10, 10)
        jd = rng.randint(-10, 10)
        jw = rng.randint(-10, 10)
        aqi = round(45 + rng.random() * 20, 1)
        pollen = round(10 + rng.random() * 20, 1)
        b.snapshot(day, aqi, pollen)
        weekday = (WEDDING_START + timedelta(days=day)).weekday()
        if weekday < 5:
            b.activity(day, "sleeping", 0, 7 * 60)
            b.meal(day, "oatmeal_bowl", 7 * 60 + 15 + jb)
            b.activity(day, "commuting", 8 * 60, 8 * 60 + 45)
            b.activity(day, "working", 9 * 60, 12 * 60 + 30)
            b.meal(day, "packed_lunch", 12 * 60 + 45)
            b.activity(day, "working", 13 * 60 + 30, 17 * 60 + 30)
            b.activity(day, "commuting", 17 * 60 + 30, 18 * 60 + 15)
            if weekday in (1, 3):
                walk = 18 * 60 + 30 + jw
                b.activity(day, "exercising", walk, walk + 30)
            b.meal(day, "home_dinner", 19 * 60 + 30 + jd)
            b.activity(day, "watching_tv", 20 * 60 + 30, 22 * 60 + 30)
            if day == 7:
                # Post-festivity slump: the negative-mood Monday.
                for minute in (10 * 60, 14 * 60, 18 * 60):
                    b.mood(day, -1, minute)
        else:
            b.activity(day, "sleeping", 0, 8 * 60 + 30)
            b.meal(day, "wedding_brunch", 9 * 60 + 30)
            b.activity(day, "socializing", 10 * 60, 23 * 60)
            b.meal(day, "feast_lunch", 13 * 60)
            b.meal(day, "wedding_cake", 16 * 60 + 30)
            b.meal(day, "feast_dinner", 19 * 60 + 30)
    return b


def generate_scenario(
    name: str,
    seed: int,
    horizon_days: int | None = None,
    arm: str = "active",
) -> Scenario:
    if name not in SCENARIO_NAMES:
        raise ValidationError(
            f"unknown scenario {name!r}; available: {', '.join(SCENARIO_NAMES)}"
        )
    if arm not in ("active", "placebo"):
        raise ValidationError(f"arm must be active or placebo, got {arm!r}")
    horizon = DEFAULT_HORIZON[name] if horizon_days is None else horizon_days
    if horizon < 0:
        raise ValidationError("horizon must be >= 0")
    builder = _commute_lunch(seed, horizon) if name == "commute_lunch" else _wedding_weekend(seed, horizon)
    return Scenario(
        name=name,
        seed=seed,
        arm=arm,
        horizon_days=horizon,
        start=builder.start,
        subject=builder.subject,
        events=tuple(builder.events),
        decision_points=tuple(builder.decisions),
        catalog=LUNCH_CATALOG,
        env=tuple(builder.env),
        mood_affinity=dict(MOOD_AFFINITY),
    )
