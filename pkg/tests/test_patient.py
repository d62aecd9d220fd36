"""Glucose plant dynamics, conservation, and the acceptance model.

The dynamics oracle is an exact-rational (Fraction) re-derivation of the
documented recurrence, so float drift in the implementation is the only
allowed difference.
"""
from __future__ import annotations

import math
import random
from fractions import Fraction

import pytest

from healthloop.errors import ValidationError
from healthloop.ingest import FoodAttrs
from healthloop.patient import (
    PatientState,
    SimConfig,
    TickEffects,
    acceptance_probability,
    daily_relax,
    decide,
    logistic,
    s_base_for_risk,
    step,
)
from healthloop.recommend import BehaviorModelParams, ScoredCandidate, Trigger
from helpers import ts

CFG = SimConfig()


# ------------------------------------------------------------------ config


def test_sim_config_validation():
    with pytest.raises(ValidationError):
        SimConfig(tick_minutes=7)  # does not divide 1440
    with pytest.raises(ValidationError):
        SimConfig(tick_minutes=0)
    with pytest.raises(ValidationError):
        SimConfig(horizon_days=-1)
    with pytest.raises(ValidationError):
        SimConfig(k_c=0)
    with pytest.raises(ValidationError):
        SimConfig(g_min=100, g_target=100)
    with pytest.raises(ValidationError):
        SimConfig(s_min=0)


def test_sim_config_tick_derivations():
    assert CFG.ticks_per_day == 288
    assert CFG.absorption_ticks == 24   # 2 h of 5-minute ticks
    assert CFG.med_ticks == 48          # 4 h
    assert SimConfig(tick_minutes=60).ticks_per_day == 24


# --------------------------------------------------------- frozen dynamics


def test_resting_state_is_a_fixed_point():
    state = PatientState()
    for _ in range(50):
        step(state, TickEffects(), CFG)
    assert state.g == 100.0
    assert state.s == 1.0


def test_drift_pulls_toward_target():
    state = PatientState(g=200.0)
    step(state, TickEffects(), CFG)
    assert state.g == pytest.approx(190.0)  # 200 + 0.1 * (100 - 200)
    for _ in range(200):
        step(state, TickEffects(), CFG)
    assert state.g == pytest.approx(100.0, abs=1e-6)


def test_meal_enqueues_at_frozen_sensitivity():
    state = PatientState(s=0.8)
    meal = FoodAttrs(carbs_g=48.0)
    step(state, TickEffects(meals=(meal,), meal_time=ts(0)), CFG)
    assert state.carbs_eaten == 48.0
    assert state.last_meal_time == ts(0)
    assert len(state.absorption) == 1
    assert state.absorption[0].rate == pytest.approx(2.0 / 0.8)
    # later sensitivity changes leave the queued rate untouched
    step(state, TickEffects(exercise_minutes=30), CFG)
    assert state.s == pytest.approx(0.8 + 0.002 * 30)
    assert state.absorption[0].rate == pytest.approx(2.0 / 0.8)


def test_single_tick_meal_frozen_value():
    # 50 g over 24 ticks: first tick absorbs 50/24 g -> rise (50/24)*2;
    # then drift pulls 10% of the excess back toward 100.
    state = PatientState()
    step(state, TickEffects(meals=(FoodAttrs(carbs_g=50.0),), meal_time=ts(0)), CFG)
    pre_drift = 100.0 + (50.0 / 24.0) * 2.0
    assert state.g == pytest.approx(pre_drift + 0.1 * (100.0 - pre_drift))


def test_single_tick_medication_frozen_value():
    # one dose drains 30/48 on its first tick; drift restores 10% of it
    state = PatientState()
    step(state, TickEffects(medication_doses=1), CFG)
    assert state.g == pytest.approx(99.4375)


def test_meal_is_fully_absorbed_and_conserved():
    state = PatientState()
    step(state, TickEffects(meals=(FoodAttrs(carbs_g=50.0),), meal_time=ts(0)), CFG)
    for _ in range(CFG.absorption_ticks - 1):
        step(state, TickEffects(), CFG)
    assert state.absorption == []
    assert state.carbs_absorbed == pytest.approx(50.0, rel=1e-12)
    assert state.carbs_eaten == 50.0


def test_zero_carb_meal_enqueues_nothing():
    state = PatientState()
    step(state, TickEffects(meals=(FoodAttrs(carbs_g=0.0),), meal_time=ts(0)), CFG)
    assert state.absorption == []
    assert state.carbs_eaten == 0.0
    assert state.last_meal_time == ts(0)


def test_clamps_bound_state():
    state = PatientState(g=60.0)
    step(state, TickEffects(exercise_minutes=120), CFG)  # acute drop 60
    assert state.g == CFG.g_min
    state = PatientState()
    step(state, TickEffects(exercise_minutes=600), CFG)
    assert state.s == CFG.s_max
    state = PatientState(g=390.0)
    step(state, TickEffects(meals=(FoodAttrs(carbs_g=500.0),), meal_time=ts(0)), CFG)
    assert state.g <= CFG.g_max


# -------------------------------------------------------- rational oracle


class _RationalPlant:
    """Same recurrence in exact arithmetic."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.g = Fraction(100)
        self.s = Fraction(1)
        self.meals: list[list] = []   # [remaining, ticks_left, rate]
        self.meds: list[list] = []

    def step(self, effects: TickEffects) -> None:
        cfg = self.cfg
        for meal in effects.meals:
            if meal.carbs_g > 0:
                self.meals.append([
                    Fraction(meal.carbs_g), cfg.absorption_ticks,
                    Fraction(cfg.k_c) / self.s,
                ])
        for _ in range(effects.medication_doses):
            self.meds.append([Fraction(cfg.med_drop), cfg.med_ticks, Fraction(1)])
        if effects.exercise_minutes > 0:
            ex = Fraction(effects.exercise_minutes)
            self.s = self._clamp(self.s + Fraction(cfg.k_e) * ex,
                                 Fraction(cfg.s_min), Fraction(cfg.s_max))
            self.g -= Fraction(cfg.exercise_drop) * ex
        for queue in (self.meals, self.meds):
            sign = 1 if queue is self.meals else -1
            for q in queue:
                amount = q[0] if q[1] <= 1 else q[0] / q[1]
                q[0] -= amount
                q[1] -= 1
                self.g += sign * amount * (q[2] if sign == 1 else 1)
        self.meals = [q for q in self.meals if q[1] > 0]
        self.meds = [q for q in self.meds if q[1] > 0]
        self.g += Fraction(cfg.drift_rate) * (Fraction(cfg.g_target) - self.g)
        self.g = self._clamp(self.g, Fraction(cfg.g_min), Fraction(cfg.g_max))

    @staticmethod
    def _clamp(x, lo, hi):
        return max(lo, min(hi, x))


def test_step_matches_rational_oracle_on_random_schedules():
    rng = random.Random(606)
    for _ in range(25):
        state = PatientState()
        oracle = _RationalPlant(CFG)
        for t in range(150):
            meals = ()
            if rng.random() < 0.05:
                meals = (FoodAttrs(carbs_g=rng.choice([30.0, 50.0, 110.0])),)
            effects = TickEffects(
                meals=meals,
                meal_time=ts(t * 300) if meals else None,
                exercise_minutes=rng.choice([0.0, 0.0, 0.0, 5.0]),
                medication_doses=1 if rng.random() < 0.02 else 0,
            )
            step(state, effects, CFG)
            oracle.step(effects)
            assert state.g == pytest.approx(float(oracle.g), abs=1e-8), t
            assert state.s == pytest.approx(float(oracle.s), abs=1e-12), t


# --------------------------------------------------- baseline + relaxation


def test_s_base_for_risk_frozen_points():
    assert s_base_for_risk(0.0, CFG) == pytest.approx(1.2)
    assert s_base_for_risk(20.0, CFG) == pytest.approx(0.9)
    assert s_base_for_risk(100.0, CFG) == CFG.s_min  # clamped from -0.3


def test_daily_relax_moves_s_toward_base():
    state = PatientState(s=1.0)
    daily_relax(state, 0.5, CFG)
    assert state.s == pytest.approx(0.9)  # 1.0 + 0.2 * (0.5 - 1.0)
    for _ in range(100):
        daily_relax(state, 0.5, CFG)
    assert state.s == pytest.approx(0.5, abs=1e-6)


# -------------------------------------------------------------- acceptance


def _scored(p=0.5, a=0.6, habitual=False):
    return ScoredCandidate(item="dish", h=1.0, p=p, a=a, habitual=habitual,
                           utility=0.75)


def _trig(synergy=True):
    return Trigger(timestamp=ts(0), subject="p001", item="dish", reason="r",
                   synergy=synergy, h=1.0, p=0.5, a=0.6, utility=0.75)


def test_logistic_basics():
    assert logistic(0.0) == pytest.approx(0.5)
    assert logistic(1e9) == logistic(60.0)
    assert logistic(-1e9) == logistic(-60.0)
    assert logistic(2.0) > logistic(1.0) > logistic(0.0)


def test_acceptance_probability_frozen_example():
    # logit = 2*0.5 + 1*0.6 + 0.8 - 1.5 = 0.9
    params = BehaviorModelParams()
    want = 1.0 / (1.0 + math.exp(-0.9))
    assert acceptance_probability(_trig(), _scored(), CFG, params) == pytest.approx(want)


def test_acceptance_without_synergy_drops_bonus():
    params = BehaviorModelParams()
    with_syn = acceptance_probability(_trig(True), _scored(), CFG, params)
    without = acceptance_probability(_trig(False), _scored(), CFG, params)
    assert without == pytest.approx(1.0 / (1.0 + math.exp(-0.1)))
    assert without < with_syn


def test_acceptance_infeasible_is_hard_reject():
    params = BehaviorModelParams()
    assert acceptance_probability(_trig(), _scored(a=0.0), CFG, params) == 0.0
    assert acceptance_probability(_trig(), _scored(a=-0.5), CFG, params) == 0.0
    for _ in range(50):
        assert decide(_trig(), _scored(a=0.0), CFG, params, random.Random(1)) is False


def test_acceptance_saturates_with_large_gain():
    cfg = SimConfig(gamma_m=1000.0)
    params = BehaviorModelParams()
    assert acceptance_probability(_trig(), _scored(p=1.0), cfg, params) == pytest.approx(1.0)
    rng = random.Random(3)
    assert all(decide(_trig(), _scored(p=1.0), cfg, params, rng) for _ in range(100))


def test_acceptance_habit_weight_feeds_motivation():
    cfg = CFG
    params = BehaviorModelParams(w_p=0.5, w_g=0.5, w_s=0.0)
    p_hab = acceptance_probability(_trig(), _scored(habitual=True), cfg, params)
    p_not = acceptance_probability(_trig(), _scored(habitual=False), cfg, params)
    assert p_hab > p_not


def test_decide_is_deterministic_per_seed():
    params = BehaviorModelParams()
    runs = []
    for _ in range(2):
        rng = random.Random("42:accept")
        runs.append([decide(_trig(), _scored(), CFG, params, rng) for _ in range(40)])
    assert runs[0] == runs[1]
    assert True in runs[0] and False in runs[0]
