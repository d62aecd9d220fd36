"""Synthetic patient: a deliberately small, non-clinical plant.

Discrete-time glucose dynamics with uniform carb absorption, insulin
sensitivity nudged by exercise and relaxed daily toward a risk-dependent
baseline, plus a logistic acceptance model for dispatched suggestions.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from datetime import datetime

from .errors import ValidationError
from .ingest import FoodAttrs
from .recommend import BehaviorModelParams, ScoredCandidate, Trigger, motivation


@dataclass(frozen=True, slots=True)
class SimConfig:
    tick_minutes: int = 5
    horizon_days: int = 14
    k_c: float = 2.0              # mg/dL rise per gram carb at S = 1
    absorption_hours: float = 2.0
    k_e: float = 0.002            # S gain per exercise minute
    exercise_drop: float = 0.5    # acute mg/dL drop per exercise minute
    eta: float = 0.2              # daily S relaxation rate toward S_base(R)
    med_drop: float = 30.0        # mg/dL removed per adherent dose
    med_hours: float = 4.0
    drift_rate: float = 0.1      # per-tick pull of G toward g_target
    g_target: float = 100.0
    g_min: float = 40.0
    g_max: float = 400.0
    s_min: float = 0.3
    s_max: float = 1.5
    s_base_intercept: float = 1.2
    s_base_slope: float = 0.015
    gamma_m: float = 2.0
    gamma_a: float = 1.0
    gamma_t: float = 0.8
    gamma_0: float = 1.5

    def __post_init__(self) -> None:
        if self.tick_minutes <= 0 or 1440 % self.tick_minutes != 0:
            raise ValidationError("tick must be positive and divide the day")
        if self.horizon_days < 0:
            raise ValidationError("horizon must be >= 0")
        for name in ("k_c", "absorption_hours", "k_e", "eta", "med_hours", "drift_rate"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be > 0")
        if not self.g_min < self.g_target < self.g_max:
            raise ValidationError("need g_min < g_target < g_max")
        if not 0 < self.s_min < self.s_max:
            raise ValidationError("need 0 < s_min < s_max")

    @property
    def ticks_per_day(self) -> int:
        return 1440 // self.tick_minutes

    @property
    def absorption_ticks(self) -> int:
        return max(1, round(self.absorption_hours * 60 / self.tick_minutes))

    @property
    def med_ticks(self) -> int:
        return max(1, round(self.med_hours * 60 / self.tick_minutes))


@dataclass
class _Queued:
    remaining: float
    ticks_left: int
    rate: float  # mg/dL per unit drained


@dataclass
class PatientState:
    g: float = 100.0
    s: float = 1.0
    mood_valence: int = 0
    last_meal_time: datetime | None = None
    absorption: list[_Queued] = field(default_factory=list)
    medication: list[_Queued] = field(default_factory=list)
    carbs_eaten: float = 0.0
    carbs_absorbed: float = 0.0


@dataclass(frozen=True, slots=True)
class TickEffects:
    meals: tuple[FoodAttrs, ...] = ()
    meal_time: datetime | None = None
    exercise_minutes: float = 0.0
    medication_doses: int = 0
    mood_valence: int | None = None


def _clamp(x: float, lo: float, hi: float) -> float:
    return max(lo, min(hi, x))


def _drain(q: _Queued) -> float:
    """Uniform spread that drains to exactly zero on the last tick."""
    amount = q.remaining if q.ticks_left <= 1 else q.remaining / q.ticks_left
    q.remaining -= amount
    q.ticks_left -= 1
    return amount


def step(state: PatientState, effects: TickEffects, cfg: SimConfig) -> PatientState:
    """Advance one tick in place. Order: intake enqueue, exercise,
    absorption, medication, basal drift, clamp. Sensitivity is frozen
    per meal at intake time, so one meal's rise is k_c * C / S_meal."""
    for meal in effects.meals:
        if meal.carbs_g > 0:
            state.absorption.append(
                _Queued(
                    remaining=meal.carbs_g,
                    ticks_left=cfg.absorption_ticks,
                    rate=cfg.k_c / state.s,
                )
            )
            state.carbs_eaten += meal.carbs_g
    if effects.meals and effects.meal_time is not None:
        state.last_meal_time = effects.meal_time
    for _ in range(effects.medication_doses):
        state.medication.append(
            _Queued(remaining=cfg.med_drop, ticks_left=cfg.med_ticks, rate=1.0)
        )
    if effects.exercise_minutes > 0:
        state.s = _clamp(state.s + cfg.k_e * effects.exercise_minutes, cfg.s_min, cfg.s_max)
        state.g -= cfg.exercise_drop * effects.exercise_minutes
    if effects.mood_valence is not None:
        state.mood_valence = effects.mood_valence

    for q in state.absorption:
        absorbed = _drain(q)
        state.g += absorbed * q.rate
        state.carbs_absorbed += absorbed
    state.absorption = [q for q in state.absorption if q.ticks_left > 0]

    for q in state.medication:
        state.g -= _drain(q)
    state.medication = [q for q in state.medication if q.ticks_left > 0]

    state.g += cfg.drift_rate * (cfg.g_target - state.g)
    state.g = _clamp(state.g, cfg.g_min, cfg.g_max)
    return state


def s_base_for_risk(r: float, cfg: SimConfig) -> float:
    return _clamp(
        cfg.s_base_intercept - cfg.s_base_slope * r, cfg.s_min, cfg.s_base_intercept
    )


def daily_relax(state: PatientState, s_base: float, cfg: SimConfig) -> PatientState:
    """Once-per-day pull of S toward the risk-derived baseline; kept out
    of step() so tick dynamics stay independent of the risk model."""
    state.s = _clamp(state.s + cfg.eta * (s_base - state.s), cfg.s_min, cfg.s_max)
    return state


def logistic(x: float) -> float:
    x = _clamp(x, -60.0, 60.0)
    return 1.0 / (1.0 + math.exp(-x))


def acceptance_probability(
    trigger: Trigger,
    scored: ScoredCandidate,
    cfg: SimConfig,
    params: BehaviorModelParams,
) -> float:
    if scored.a <= 0:
        return 0.0  # infeasible suggestions are never taken
    m = motivation(scored.p, scored.habitual, params)
    logit = (
        cfg.gamma_m * m
        + cfg.gamma_a * scored.a
        + cfg.gamma_t * (1.0 if trigger.synergy else 0.0)
        - cfg.gamma_0
    )
    return logistic(logit)


def decide(
    trigger: Trigger,
    scored: ScoredCandidate,
    cfg: SimConfig,
    params: BehaviorModelParams,
    rng: random.Random,
) -> bool:
    return rng.random() < acceptance_probability(trigger, scored, cfg, params)
