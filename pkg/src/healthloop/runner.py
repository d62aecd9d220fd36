"""Closed-loop experiment runner and the active-vs-placebo comparison.

One run is strictly single-threaded: a scenario schedule drives the
synthetic patient tick by tick; day boundaries update the risk model,
habit waveform, and preference model; the active arm routes decision
points and risk alerts through the recommender while the placebo arm
eats its defaults and never touches the audit log.
"""
from __future__ import annotations

import io
import math
import random
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Any, Mapping, Sequence

import yaml

from .errors import ConfigError, ValidationError
from .events import Event, Personicle, StreamKind, make_attrs
from .habit import (
    HabitWaveform,
    daily_occupancy,
    day_anomaly_score,
    is_anomalous,
    update_waveform,
    week_occupancy,
)
from .ingest import FoodAttrs, MoodMark, events_to_jsonl, format_timestamp, mood_marks
from .patient import (
    PatientState,
    SimConfig,
    TickEffects,
    daily_relax,
    decide,
    s_base_for_risk,
    step,
)
from .predict import (
    DEFAULT_LAYER1,
    DEFAULT_RISK_WEIGHTS,
    ParameterCascade,
    PreferenceModel,
    RISK_FEATURES,
    RiskModel,
    day_features,
    habitual_flags,
    mood_shift_alert,
    preference_scores,
    resolve_parameters,
    risk_update,
)
from .recommend import (
    BehaviorModelParams,
    Context,
    DispatchState,
    GLYCOGEN_NEED,
    Trigger,
    build_trigger,
    score_candidates,
    should_dispatch,
    trigger_to_audit_line,
)
from .scenarios import DEFAULT_AFFINITY, SCENARIO_NAMES, Scenario, generate_scenario

NATURAL_TRIGGER_GAP = timedelta(hours=4)
GLYCOGEN_LOOKBACK = timedelta(hours=2)
MOOD_MARK_DELAY = timedelta(minutes=20)


# ------------------------------------------------------------- config


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    horizon_days: int | None = None
    tick_minutes: int = 5
    arm: str | None = None
    seed: int = 0
    alpha: float = 0.1
    anomaly_k: float = 3.0
    profile_tags: tuple[str, ...] = ()
    patient: Mapping[str, float] = field(default_factory=dict)
    risk_beta: float = 0.9
    risk_weights: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_RISK_WEIGHTS))
    theta_high: float = 16.0
    theta_low: float = 8.0
    alert_gap_hours: float = 72.0
    lam: float = 0.5
    a_min: float = 0.2
    pref_floor: float = 0.2
    top_n: int = 5
    w_p: float = 1.0
    w_g: float = 0.0
    w_s: float = 0.0
    cascade_layer1: Mapping[str, float] = field(default_factory=dict)
    cascade_layer2: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    cascade_layer3: Mapping[str, float] = field(default_factory=dict)
    cascade_layer4: Mapping[str, float] = field(default_factory=dict)


_PATIENT_KEYS = (
    "k_c", "absorption_hours", "k_e", "exercise_drop", "eta", "med_drop",
    "med_hours", "drift_rate", "g_target", "g_min", "g_max", "s_min", "s_max",
    "s_base_intercept", "s_base_slope", "gamma_m", "gamma_a", "gamma_t", "gamma_0",
)

_SECTION_KEYS = {
    "scenario", "horizon_days", "tick_minutes", "arm", "seed", "alpha",
    "anomaly_k", "profile_tags", "patient", "risk", "dispatch", "recommend",
    "cascade",
}


def _number(errors: list[str], raw: Any, path: str, default: float) -> float:
    if raw is None:
        return default
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        errors.append(f"{path}: expected a number, got {raw!r}")
        return default
    return float(raw)


def config_from_dict(data: Mapping[str, Any]) -> ExperimentConfig:
    """Build a validated config, collecting every field error before failing."""
    errors: list[str] = []
    if not isinstance(data, Mapping):
        raise ConfigError("config root must be a mapping")
    for key in data:
        if key not in _SECTION_KEYS:
            errors.append(f"{key}: unknown config key")

    scenario = data.get("scenario")
    if scenario not in SCENARIO_NAMES:
        errors.append(
            f"scenario: required, one of {', '.join(SCENARIO_NAMES)}; got {scenario!r}"
        )
        scenario = SCENARIO_NAMES[0]

    horizon = data.get("horizon_days")
    if horizon is not None and (not isinstance(horizon, int) or isinstance(horizon, bool) or horizon < 0):
        errors.append(f"horizon_days: expected integer >= 0, got {horizon!r}")
        horizon = None

    tick = data.get("tick_minutes", 5)
    if not isinstance(tick, int) or isinstance(tick, bool) or tick <= 0 or 1440 % tick != 0:
        errors.append(f"tick_minutes: must be a positive divisor of 1440, got {tick!r}")
        tick = 5

    arm = data.get("arm")
    if arm is not None and arm not in ("active", "placebo"):
        errors.append(f"arm: must be active or placebo, got {arm!r}")
        arm = None

    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        errors.append(f"seed: expected integer, got {seed!r}")
        seed = 0

    alpha = _number(errors, data.get("alpha"), "alpha", 0.1)
    if not 0 < alpha <= 1:
        errors.append(f"alpha: must lie in (0, 1], got {alpha}")
        alpha = 0.1
    anomaly_k = _number(errors, data.get("anomaly_k"), "anomaly_k", 3.0)

    tags_raw = data.get("profile_tags", [])
    tags: tuple[str, ...] = ()
    if isinstance(tags_raw, (list, tuple)) and all(isinstance(t, str) for t in tags_raw):
        tags = tuple(tags_raw)
    elif tags_raw:
        errors.append(f"profile_tags: expected a list of strings, got {tags_raw!r}")

    patient_raw = data.get("patient") or {}
    patient: dict[str, float] = {}
    if not isinstance(patient_raw, Mapping):
        errors.append("patient: expected a mapping")
    else:
        for key, value in patient_raw.items():
            if key not in _PATIENT_KEYS:
                errors.append(f"patient.{key}: unknown parameter")
                continue
            patient[key] = _number(errors, value, f"patient.{key}", 0.0)

    risk_raw = data.get("risk") or {}
    beta = 0.9
    weights = dict(DEFAULT_RISK_WEIGHTS)
    if not isinstance(risk_raw, Mapping):
        errors.append("risk: expected a mapping")
    else:
        beta = _number(errors, risk_raw.get("beta"), "risk.beta", 0.9)
        if not 0 <= beta < 1:
            errors.append(f"risk.beta: must lie in [0, 1), got {beta}")
            beta = 0.9
        weights_raw = risk_raw.get("weights") or {}
        if not isinstance(weights_raw, Mapping):
            errors.append("risk.weights: expected a mapping")
        else:
            for name, value in weights_raw.items():
                if name not in RISK_FEATURES:
                    errors.append(f"risk.weights.{name}: unknown feature")
                    continue
                weights[name] = _number(errors, value, f"risk.weights.{name}", weights[name])
        for key in risk_raw:
            if key not in ("beta", "weights"):
                errors.append(f"risk.{key}: unknown key")

    dispatch_raw = data.get("dispatch") or {}
    theta_high, theta_low, gap_hours = 16.0, 8.0, 72.0
    if not isinstance(dispatch_raw, Mapping):
        errors.append("dispatch: expected a mapping")
    else:
        theta_high = _number(errors, dispatch_raw.get("theta_high"), "dispatch.theta_high", 16.0)
        theta_low = _number(errors, dispatch_raw.get("theta_low"), "dispatch.theta_low", 8.0)
        gap_hours = _number(errors, dispatch_raw.get("alert_gap_hours"), "dispatch.alert_gap_hours", 72.0)
        if not theta_high > theta_low >= 0:
            errors.append(f"dispatch: need theta_high > theta_low >= 0, got {theta_high}/{theta_low}")
            theta_high, theta_low = 16.0, 8.0
        if gap_hours <= 0:
            errors.append(f"dispatch.alert_gap_hours: must be > 0, got {gap_hours}")
            gap_hours = 72.0
        for key in dispatch_raw:
            if key not in ("theta_high", "theta_low", "alert_gap_hours"):
                errors.append(f"dispatch.{key}: unknown key")

    rec_raw = data.get("recommend") or {}
    lam, a_min, pref_floor, top_n = 0.5, 0.2, 0.2, 5
    w_p, w_g, w_s = 1.0, 0.0, 0.0
    if not isinstance(rec_raw, Mapping):
        errors.append("recommend: expected a mapping")
    else:
        lam = _number(errors, rec_raw.get("lambda"), "recommend.lambda", 0.5)
        a_min = _number(errors, rec_raw.get("a_min"), "recommend.a_min", 0.2)
        pref_floor = _number(errors, rec_raw.get("pref_floor"), "recommend.pref_floor", 0.2)
        w_p = _number(errors, rec_raw.get("w_p"), "recommend.w_p", 1.0)
        w_g = _number(errors, rec_raw.get("w_g"), "recommend.w_g", 0.0)
        w_s = _number(errors, rec_raw.get("w_s"), "recommend.w_s", 0.0)
        top_n_raw = rec_raw.get("top_n", 5)
        if not isinstance(top_n_raw, int) or isinstance(top_n_raw, bool) or top_n_raw < 1:
            errors.append(f"recommend.top_n: expected integer >= 1, got {top_n_raw!r}")
        else:
            top_n = top_n_raw
        if not 0 <= lam <= 1:
            errors.append(f"recommend.lambda: must lie in [0, 1], got {lam}")
            lam = 0.5
        for key in rec_raw:
            if key not in ("lambda", "a_min", "pref_floor", "top_n", "w_p", "w_g", "w_s"):
                errors.append(f"recommend.{key}: unknown key")

    cascade_raw = data.get("cascade") or {}
    layer1: dict[str, float] = {}
    layer2: dict[str, dict[str, float]] = {}
    layer3: dict[str, float] = {}
    layer4: dict[str, float] = {}
    if not isinstance(cascade_raw, Mapping):
        errors.append("cascade: expected a mapping")
    else:
        for key in cascade_raw:
            if key not in ("layer1", "layer2", "layer3", "layer4"):
                errors.append(f"cascade.{key}: unknown key")
        for name, target in (("layer1", layer1), ("layer3", layer3), ("layer4", layer4)):
            raw = cascade_raw.get(name) or {}
            if not isinstance(raw, Mapping):
                errors.append(f"cascade.{name}: expected a mapping")
                continue
            for param, value in raw.items():
                target[param] = _number(errors, value, f"cascade.{name}.{param}", 0.0)
        raw2 = cascade_raw.get("layer2") or {}
        if not isinstance(raw2, Mapping):
            errors.append("cascade.layer2: expected a mapping")
        else:
            for tag, overrides in raw2.items():
                if not isinstance(overrides, Mapping):
                    errors.append(f"cascade.layer2.{tag}: expected a mapping")
                    continue
                layer2[str(tag)] = {
                    param: _number(errors, value, f"cascade.layer2.{tag}.{param}", 0.0)
                    for param, value in overrides.items()
                }

    if errors:
        raise ConfigError("\n".join(errors))
    return ExperimentConfig(
        scenario=str(scenario),
        horizon_days=horizon,
        tick_minutes=tick,
        arm=arm,
        seed=seed,
        alpha=alpha,
        anomaly_k=anomaly_k,
        profile_tags=tags,
        patient=patient,
        risk_beta=beta,
        risk_weights=weights,
        theta_high=theta_high,
        theta_low=theta_low,
        alert_gap_hours=gap_hours,
        lam=lam,
        a_min=a_min,
        pref_floor=pref_floor,
        top_n=top_n,
        w_p=w_p,
        w_g=w_g,
        w_s=w_s,
        cascade_layer1=layer1,
        cascade_layer2=layer2,
        cascade_layer3=layer3,
        cascade_layer4=layer4,
    )


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    return config_from_dict(data)


def build_sim_config(config: ExperimentConfig, horizon_days: int) -> SimConfig:
    try:
        return SimConfig(
            tick_minutes=config.tick_minutes,
            horizon_days=horizon_days,
            **dict(config.patient),
        )
    except (ValidationError, TypeError) as exc:
        raise ConfigError(f"patient: {exc}") from None


def build_cascade(config: ExperimentConfig) -> ParameterCascade:
    layer1 = dict(DEFAULT_LAYER1)
    layer1.update(config.cascade_layer1)
    return ParameterCascade(
        layer1=layer1,
        layer2=config.cascade_layer2,
        layer3=config.cascade_layer3,
        layer4=config.cascade_layer4,
    )


def build_behavior_params(config: ExperimentConfig, sim: SimConfig) -> BehaviorModelParams:
    # The acceptance model's synergy bonus is the same knob the trigger
    # carries downstream, so it is sourced once from the patient config.
    return BehaviorModelParams(
        lam=config.lam,
        a_min=config.a_min,
        pref_floor=config.pref_floor,
        top_n=config.top_n,
        w_p=config.w_p,
        w_g=config.w_g,
        w_s=config.w_s,
        trigger_bonus=sim.gamma_t,
    )


# ---------------------------------------------------------------- run


@dataclass(frozen=True)
class RunResult:
    scenario: str
    arm: str
    seed: int
    metrics: Mapping[str, float]
    trace_rows: tuple[tuple[datetime, float, float, float], ...]
    daily_rows: tuple[Mapping[str, Any], ...]
    audit_lines: tuple[str, ...]
    events: tuple[Event, ...]
    summary: str


def _tick_of(ts: datetime, start: datetime, tick_minutes: int) -> int:
    return int((ts - start).total_seconds() // (tick_minutes * 60))


def _index_schedule(scenario: Scenario, sim: SimConfig, ticks_total: int):
    meals: dict[int, list[tuple[FoodAttrs, datetime]]] = {}
    exercise: dict[int, float] = {}
    medication: dict[int, int] = {}
    moods: dict[int, int] = {}
    tick_s = sim.tick_minutes * 60
    for ev in scenario.events:
        t = _tick_of(ev.start, scenario.start, sim.tick_minutes)
        if not 0 <= t < ticks_total:
            continue
        if ev.stream is StreamKind.FOOD:
            food = FoodAttrs(
                carbs_g=float(ev.attr("carbs_g", 0.0) or 0.0),
                fat_g=float(ev.attr("fat_g", 0.0) or 0.0),
                protein_g=float(ev.attr("protein_g", 0.0) or 0.0),
                sugar_g=float(ev.attr("sugar_g", 0.0) or 0.0),
                kcal=float(ev.attr("kcal", 0.0) or 0.0),
                dish_id=str(ev.attr("dish_id", "") or ""),
            )
            meals.setdefault(t, []).append((food, ev.start))
        elif ev.stream is StreamKind.MEDICAL and ev.category == "medication":
            medication[t] = medication.get(t, 0) + 1
        elif ev.stream is StreamKind.MOOD:
            moods[t] = int(ev.attr("valence", 0))
        elif ev.stream is StreamKind.ACTIVITY and ev.category == "exercising":
            lo = max(ev.start, scenario.start)
            hi = min(ev.effective_end, scenario.start + timedelta(minutes=sim.tick_minutes * ticks_total))
            t0 = _tick_of(lo, scenario.start, sim.tick_minutes)
            t1 = _tick_of(hi - timedelta(seconds=1), scenario.start, sim.tick_minutes) if hi > lo else t0 - 1
            for tt in range(max(0, t0), min(ticks_total - 1, t1) + 1):
                tick_start = scenario.start + timedelta(seconds=tt * tick_s)
                tick_end = tick_start + timedelta(seconds=tick_s)
                overlap = (min(hi, tick_end) - max(lo, tick_start)).total_seconds() / 60.0
                if overlap > 0:
                    exercise[tt] = exercise.get(tt, 0.0) + overlap
    return meals, exercise, medication, moods


def _glycogen_need(events: Sequence[Event], now: datetime) -> dict[str, float]:
    for ev in reversed(events):
        if ev.stream is StreamKind.ACTIVITY and ev.category == "exercising":
            if now - GLYCOGEN_LOOKBACK <= ev.effective_end <= now:
                return {GLYCOGEN_NEED: 1.0}
    return {}


def _draw_valence(rng: random.Random, affinity: tuple[float, float]) -> int:
    p_plus, p_zero = affinity
    u = rng.random()
    if u < p_plus:
        return 1
    if u < p_plus + p_zero:
        return 0
    return -1


def run_experiment(
    config: ExperimentConfig, seed: int | None = None, arm: str | None = None
) -> RunResult:
    seed = config.seed if seed is None else seed
    arm = arm or config.arm or "active"
    if arm not in ("active", "placebo"):
        raise ConfigError(f"arm must be active or placebo, got {arm!r}")

    scenario = generate_scenario(config.scenario, seed, config.horizon_days, arm=arm)
    sim = build_sim_config(config, scenario.horizon_days)
    cascade = build_cascade(config)
    targets = resolve_parameters(cascade, config.profile_tags)
    params = build_behavior_params(config, sim)
    risk = RiskModel(beta=config.risk_beta, weights=dict(config.risk_weights))
    dispatch_state = DispatchState(
        theta_high=config.theta_high,
        theta_low=config.theta_low,
        alert_gap=timedelta(hours=config.alert_gap_hours),
    )
    patient = PatientState()
    prefs = PreferenceModel()
    habitual: Mapping[str, bool] = {}
    waveform = HabitWaveform(alpha=config.alpha)
    anomaly_history: list[float] = []

    accept_rng = random.Random(f"{seed}:accept")
    mood_rng = random.Random(f"{seed}:mood")

    ticks_per_day = sim.ticks_per_day
    ticks_total = scenario.horizon_days * ticks_per_day
    meals_by_tick, exercise_by_tick, meds_by_tick, moods_by_tick = _index_schedule(
        scenario, sim, ticks_total
    )
    decisions_by_tick = {
        _tick_of(dp.at, scenario.start, sim.tick_minutes): dp
        for dp in scenario.decision_points
        if 0 <= _tick_of(dp.at, scenario.start, sim.tick_minutes) < ticks_total
    }
    aqi_by_day: dict[int, float] = {}
    for snap in scenario.env:
        aqi_by_day[(snap.timestamp - scenario.start).days] = snap.aqi

    events: list[Event] = list(scenario.events)
    marks: list[MoodMark] = mood_marks(scenario.events)
    pending_moods: dict[int, list[tuple[int, str, datetime]]] = {}
    audit_lines: list[str] = []
    trace_rows: list[tuple[datetime, float, float, float]] = []
    daily_rows: list[dict[str, Any]] = []
    offers = accepts = risk_alerts = 0
    dyn_counter = 0
    in_range_ticks = 0
    g_sum = 0.0
    glucose_lo, glucose_hi = targets["glucose_low"], targets["glucose_high"]

    for t in range(ticks_total):
        tick_time = scenario.start + timedelta(minutes=t * sim.tick_minutes)
        tick_meals: list[tuple[FoodAttrs, datetime]] = list(meals_by_tick.get(t, ()))

        dp = decisions_by_tick.get(t)
        if dp is not None:
            default_item = scenario.catalog.by_dish(dp.default_dish)
            if default_item is None:
                raise ConfigError(f"default dish {dp.default_dish!r} not in catalog")
            eaten = default_item
            if arm == "active":
                ctx = Context(
                    now=dp.at,
                    travel_budget_min=dp.travel_budget_min,
                    natural_trigger=(
                        patient.last_meal_time is None
                        or dp.at - patient.last_meal_time >= NATURAL_TRIGGER_GAP
                    ),
                    needs=_glycogen_need(events, dp.at),
                )
                ranking = score_candidates(
                    scenario.catalog, ctx, prefs, params, targets, habitual
                )
                if ranking.candidates:
                    top = ranking.candidates[0]
                    trigger = build_trigger(
                        top, ctx, scenario.subject, reason=f"{dp.kind} decision", kind="suggestion"
                    )
                    accepted = decide(trigger, top, sim, params, accept_rng)
                    offers += 1
                    accepts += int(accepted)
                    audit_lines.append(trigger_to_audit_line(trigger, accepted=accepted))
                    if accepted:
                        chosen = scenario.catalog.by_dish(top.item)
                        if chosen is not None:
                            eaten = chosen
            dyn_counter += 1
            meal_event = Event(
                id=f"dmeal-{dyn_counter:04d}",
                stream=StreamKind.FOOD,
                category="meal",
                start=dp.at,
                attrs=make_attrs(
                    {
                        "dish_id": eaten.food.dish_id,
                        "carbs_g": eaten.food.carbs_g,
                        "fat_g": eaten.food.fat_g,
                        "protein_g": eaten.food.protein_g,
                        "sugar_g": eaten.food.sugar_g,
                        "kcal": eaten.food.kcal,
                    }
                ),
                subject=scenario.subject,
            )
            events.append(meal_event)
            tick_meals.append((eaten.food, dp.at))
            mood_at = dp.at + MOOD_MARK_DELAY
            mood_tick = _tick_of(mood_at, scenario.start, sim.tick_minutes)
            if mood_tick < ticks_total:
                affinity = scenario.mood_affinity.get(eaten.food.dish_id, DEFAULT_AFFINITY)
                valence = _draw_valence(mood_rng, affinity)
                pending_moods.setdefault(mood_tick, []).append(
                    (valence, meal_event.id, mood_at)
                )

        mood_valence = moods_by_tick.get(t)
        for valence, linked_id, mood_at in pending_moods.pop(t, ()):
            dyn_counter += 1
            mood_event = Event(
                id=f"dmood-{dyn_counter:04d}",
                stream=StreamKind.MOOD,
                category="mood_mark",
                start=mood_at,
                attrs=make_attrs({"valence": valence, "linked_event_id": linked_id}),
                subject=scenario.subject,
            )
            events.append(mood_event)
            marks.append(
                MoodMark(valence=valence, timestamp=mood_at, linked_event_id=linked_id)
            )
            mood_valence = valence

        effects = TickEffects(
            meals=tuple(food for food, _ in tick_meals),
            meal_time=max((ts for _, ts in tick_meals), default=None),
            exercise_minutes=exercise_by_tick.get(t, 0.0),
            medication_doses=meds_by_tick.get(t, 0),
            mood_valence=mood_valence,
        )
        step(patient, effects, sim)
        trace_rows.append((tick_time, patient.g, patient.s, risk.r))
        g_sum += patient.g
        if glucose_lo <= patient.g <= glucose_hi:
            in_range_ticks += 1

        if (t + 1) % ticks_per_day == 0:
            day_index = t // ticks_per_day
            day_start = scenario.start + timedelta(days=day_index)
            day_end = day_start + timedelta(days=1)
            day_events = [ev for ev in events if day_start <= ev.start < day_end]
            feats = day_features(day_events, day_start, aqi=aqi_by_day.get(day_index, 0.0))
            risk = risk_update(risk, feats)
            s_base = s_base_for_risk(risk.r, sim)
            daily_relax(patient, s_base, sim)

            day_personicle = Personicle(subject=scenario.subject, events=tuple(day_events))
            day_grid = daily_occupancy(day_personicle, day_start.date())
            a_score = day_anomaly_score(waveform, day_grid, day_start.date().weekday())
            anomalous = is_anomalous(anomaly_history[-28:], a_score, config.anomaly_k)
            anomaly_history.append(a_score)
            if (day_index + 1) % 7 == 0:
                week_start = (day_start - timedelta(days=6)).date()
                week_events = [
                    ev for ev in events
                    if day_end - timedelta(days=7) <= ev.start < day_end
                ]
                week_p = Personicle(subject=scenario.subject, events=tuple(week_events))
                waveform = update_waveform(waveform, week_occupancy(week_p, week_start))

            # The schedule is materialized up front, so clip to what has
            # actually happened before feeding the learners.
            past_events = tuple(ev for ev in events if ev.start < day_end)
            past_marks = [m for m in marks if m.timestamp < day_end]
            full_p = Personicle(subject=scenario.subject, events=past_events)
            prefs = preference_scores(full_p, past_marks)
            habitual = habitual_flags(full_p)
            shift = mood_shift_alert(past_marks, now=day_end)

            fired = False
            if arm == "active":
                fired, dispatch_state = should_dispatch(dispatch_state, risk.r, day_end)
                if fired:
                    risk_alerts += 1
                    alert = Trigger(
                        timestamp=day_end,
                        subject=scenario.subject,
                        item="risk_review",
                        reason=f"risk {risk.r:.3f} crossed threshold {config.theta_high:g}",
                        synergy=False,
                        h=0.0,
                        p=0.0,
                        a=0.0,
                        utility=0.0,
                        kind="risk_alert",
                    )
                    audit_lines.append(trigger_to_audit_line(alert))

            row: dict[str, Any] = {
                "day": day_index,
                "date": day_start.date().isoformat(),
                "risk": risk.r,
                "anomaly": a_score,
                "anomalous": anomalous,
                "mood_shift": shift,
                "alert": fired,
                "s_base": s_base,
                "s": patient.s,
                "g": patient.g,
            }
            row.update(feats.as_dict())
            daily_rows.append(row)

    risk_updates = len(daily_rows)
    metrics = {
        "ticks": float(ticks_total),
        "time_in_range": (in_range_ticks / ticks_total) if ticks_total else 0.0,
        "mean_g": (g_sum / ticks_total) if ticks_total else 0.0,
        "final_g": patient.g if ticks_total else 0.0,
        "final_s": patient.s if ticks_total else 0.0,
        "final_r": risk.r,
        "max_r": max((row["risk"] for row in daily_rows), default=0.0),
        "risk_alerts": float(risk_alerts),
        "offers": float(offers),
        "accepts": float(accepts),
        "acceptance_rate": (accepts / offers) if offers else 0.0,
        "carbs_eaten": patient.carbs_eaten,
        "carbs_absorbed": patient.carbs_absorbed,
    }
    summary = "\n".join(
        [
            f"scenario {scenario.name} arm {arm} seed {seed} "
            f"({scenario.horizon_days} days, {ticks_total} ticks)",
            f"time in range [{glucose_lo:g}, {glucose_hi:g}]: {metrics['time_in_range']:.4f}",
            f"mean glucose {metrics['mean_g']:.2f} mg/dL, final sensitivity {metrics['final_s']:.3f}",
            f"final risk {metrics['final_r']:.3f} (max {metrics['max_r']:.3f}) over {risk_updates} days",
            f"risk alerts {risk_alerts}, offers {offers}, accepts {accepts}",
        ]
    )
    events_sorted = tuple(sorted(events, key=Event.sort_key))
    return RunResult(
        scenario=scenario.name,
        arm=arm,
        seed=seed,
        metrics=metrics,
        trace_rows=tuple(trace_rows),
        daily_rows=tuple(daily_rows),
        audit_lines=tuple(audit_lines),
        events=events_sorted,
        summary=summary,
    )


# ------------------------------------------------------------- rendering

_METRIC_COLUMNS = (
    "scenario", "arm", "seed", "ticks", "time_in_range", "mean_g", "final_g",
    "final_s", "final_r", "max_r", "risk_alerts", "offers", "accepts",
    "acceptance_rate", "carbs_eaten", "carbs_absorbed",
)


def _fmt(value: Any) -> str:
    if isinstance(value, bool) or value is None:
        return {True: "1", False: "0", None: ""}[value]
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def metrics_csv(results: Sequence[RunResult]) -> str:
    buf = io.StringIO()
    buf.write(",".join(_METRIC_COLUMNS) + "\n")
    for res in results:
        row = {"scenario": res.scenario, "arm": res.arm, "seed": res.seed}
        row.update(res.metrics)
        buf.write(",".join(_fmt(row.get(col, "")) for col in _METRIC_COLUMNS) + "\n")
    return buf.getvalue()


def trace_csv(result: RunResult) -> str:
    buf = io.StringIO()
    buf.write("timestamp,G,S,R\n")
    for ts, g, s, r in result.trace_rows:
        buf.write(f"{format_timestamp(ts)},{g:.6f},{s:.6f},{r:.6f}\n")
    return buf.getvalue()


_DAILY_COLUMNS = (
    "day", "date", "risk", *RISK_FEATURES, "anomaly", "anomalous",
    "mood_shift", "alert", "s_base", "s", "g",
)


def daily_csv(result: RunResult) -> str:
    buf = io.StringIO()
    buf.write(",".join(_DAILY_COLUMNS) + "\n")
    for row in result.daily_rows:
        buf.write(",".join(_fmt(row.get(col)) for col in _DAILY_COLUMNS) + "\n")
    return buf.getvalue()


def audit_text(result: RunResult) -> str:
    return "".join(line + "\n" for line in result.audit_lines)


def events_jsonl(result: RunResult) -> str:
    return events_to_jsonl(result.events)


# ------------------------------------------------------------- compare


@dataclass(frozen=True)
class CompareResult:
    rows: tuple[Mapping[str, float], ...]
    mean_delta: float
    positives: int
    negatives: int
    ties: int
    p_value: float
    summary: str


def sign_test_p(positives: int, negatives: int) -> float:
    """One-sided sign test: probability of >= positives successes out of
    positives + negatives fair coin flips."""
    m = positives + negatives
    if m == 0:
        return 1.0
    total = sum(math.comb(m, k) for k in range(positives, m + 1))
    return total / 2**m


def compare_arms(config: ExperimentConfig, seeds: Sequence[int]) -> CompareResult:
    if config.arm is not None:
        raise ConfigError(
            "compare runs both arms itself; remove the pinned arm from the config"
        )
    if len(seeds) < 2:
        raise ConfigError("compare needs at least 2 seeds")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct")

    rows: list[dict[str, float]] = []
    deltas: list[float] = []
    for seed in seeds:
        active = run_experiment(config, seed=seed, arm="active")
        placebo = run_experiment(config, seed=seed, arm="placebo")
        delta = active.metrics["time_in_range"] - placebo.metrics["time_in_range"]
        deltas.append(delta)
        rows.append(
            {
                "seed": seed,
                "tir_active": active.metrics["time_in_range"],
                "tir_placebo": placebo.metrics["time_in_range"],
                "delta": delta,
                "mean_g_active": active.metrics["mean_g"],
                "mean_g_placebo": placebo.metrics["mean_g"],
                "alerts_active": active.metrics["risk_alerts"],
                "alerts_placebo": placebo.metrics["risk_alerts"],
            }
        )
    positives = sum(1 for d in deltas if d > 0)
    negatives = sum(1 for d in deltas if d < 0)
    ties = len(deltas) - positives - negatives
    mean_delta = math.fsum(deltas) / len(deltas)
    p_value = sign_test_p(positives, negatives)
    summary = "\n".join(
        [
            f"paired comparison on {config.scenario} over {len(seeds)} seeds",
            f"mean time-in-range delta (active - placebo): {mean_delta:+.4f}",
            f"active better in {positives}, worse in {negatives}, tied in {ties}",
            f"one-sided sign test p = {p_value:.6g}",
        ]
    )
    return CompareResult(
        rows=tuple(rows),
        mean_delta=mean_delta,
        positives=positives,
        negatives=negatives,
        ties=ties,
        p_value=p_value,
        summary=summary,
    )


_COMPARE_COLUMNS = (
    "seed", "tir_active", "tir_placebo", "delta", "mean_g_active",
    "mean_g_placebo", "alerts_active", "alerts_placebo",
)


def compare_csv(result: CompareResult) -> str:
    buf = io.StringIO()
    buf.write(",".join(_COMPARE_COLUMNS) + "\n")
    for row in result.rows:
        buf.write(",".join(_fmt(row.get(col)) for col in _COMPARE_COLUMNS) + "\n")
    return buf.getvalue()
