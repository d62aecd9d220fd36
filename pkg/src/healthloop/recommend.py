"""Persuasion-aware recommendation and alert dispatch.

Candidates are scored on health impact versus preference, gated by a
feasibility floor (ability) and a preference floor, and interventions
pass through a hysteresis gate with a minimum alert gap so the loop
cannot chatter.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from typing import Mapping, Sequence

from .errors import ValidationError
from .ingest import CatalogItem, FoodAttrs, ResourceCatalog
from .predict import PreferenceModel

GLYCOGEN_NEED = "glycogen_replenishment"
# How strongly one unit of glycogen need widens the carb ceiling.
GLYCOGEN_CEILING_GAIN = 0.5
# Steepness of the deviation -> score mapping; > 1 so that a dish
# blowing one nutrient band well past its limit lands negative.
DEVIATION_GAIN = 2.5

_NUTRIENT_WEIGHT = 0.25  # four nutrient terms, equally weighted


@dataclass(frozen=True, slots=True)
class Context:
    now: datetime
    travel_budget_min: float
    natural_trigger: bool = False
    needs: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.travel_budget_min < 0:
            raise ValidationError("travel budget must be >= 0")


@dataclass(frozen=True, slots=True)
class BehaviorModelParams:
    lam: float = 0.5
    a_min: float = 0.2
    pref_floor: float = 0.2
    top_n: int = 5
    w_p: float = 1.0
    w_g: float = 0.0
    w_s: float = 0.0
    trigger_bonus: float = 0.8

    def __post_init__(self) -> None:
        if not 0 <= self.lam <= 1:
            raise ValidationError("lambda must lie in [0, 1]")
        if min(self.w_p, self.w_g, self.w_s) < 0:
            raise ValidationError("motivation weights must be >= 0")
        if abs(self.w_p + self.w_g + self.w_s - 1.0) > 1e-9:
            raise ValidationError("motivation weights must sum to 1")
        if self.trigger_bonus < 0:
            raise ValidationError("trigger bonus must be >= 0")


@dataclass(frozen=True, slots=True)
class ScoredCandidate:
    item: str
    h: float
    p: float
    a: float
    habitual: bool
    utility: float


@dataclass(frozen=True, slots=True)
class RankingResult:
    candidates: tuple[ScoredCandidate, ...]
    note: str = ""


def ability(item: CatalogItem, ctx: Context) -> float:
    if not item.is_open(ctx.now):
        return 0.0
    if item.travel_minutes > ctx.travel_budget_min:
        return 0.0
    if ctx.travel_budget_min == 0:
        return 1.0  # reachable at zero travel
    return 1.0 - item.travel_minutes / ctx.travel_budget_min


def _band_deviation(value: float, low: float, high: float) -> float:
    if value < low:
        return min(1.0, (low - value) / low) if low > 0 else 0.0
    if value > high:
        return min(1.0, (value - high) / high) if high > 0 else 1.0
    return 0.0


def _ceiling_deviation(value: float, ceiling: float) -> float:
    if value <= ceiling:
        return 0.0
    return min(1.0, (value - ceiling) / ceiling) if ceiling > 0 else 1.0


def health_impact(
    food: FoodAttrs, needs: Mapping[str, float], targets: Mapping[str, float]
) -> float:
    """Map nutrient deviations from the resolved target bands to [-1, 1].

    A dish on target scores 1; each nutrient contributes its capped
    relative deviation. Glycogen need raises the carb ceiling so
    post-exercise carb-heavy options stop being penalized.
    """
    carbs_high = targets["carbs_high"]
    need = needs.get(GLYCOGEN_NEED, 0.0)
    if need > 0:
        carbs_high *= 1.0 + GLYCOGEN_CEILING_GAIN * need
    deviations = (
        _band_deviation(food.carbs_g, targets["carbs_low"], carbs_high),
        _ceiling_deviation(food.sugar_g, targets["sugar_max"]),
        _ceiling_deviation(food.fat_g, targets["fat_max"]),
        _band_deviation(food.kcal, targets["kcal_low"], targets["kcal_high"]),
    )
    penalty = min(1.0, DEVIATION_GAIN * _NUTRIENT_WEIGHT * sum(deviations))
    return 1.0 - 2.0 * penalty


def motivation(p: float, habitual: bool, params: BehaviorModelParams) -> float:
    # Social pressure input is a stub; its weight defaults to 0.
    return params.w_p * p + params.w_g * (1.0 if habitual else 0.0) + params.w_s * 0.0


def score_candidates(
    catalog: ResourceCatalog,
    ctx: Context,
    prefs: PreferenceModel,
    params: BehaviorModelParams,
    targets: Mapping[str, float],
    habitual: Mapping[str, bool] | None = None,
) -> RankingResult:
    habitual = habitual or {}
    scored = []
    for item in catalog.items:
        a = ability(item, ctx)
        if a < params.a_min:
            continue
        p = prefs.score(item.dish_id)
        if p < params.pref_floor:
            continue
        h = health_impact(item.food, ctx.needs, targets)
        utility = params.lam * h + (1.0 - params.lam) * p
        scored.append(
            ScoredCandidate(
                item=item.dish_id,
                h=h,
                p=p,
                a=a,
                habitual=bool(habitual.get(item.dish_id, False)),
                utility=utility,
            )
        )
    scored.sort(key=lambda c: (-c.utility, c.item))
    top = tuple(scored[: params.top_n])
    note = "" if top else "no feasible options"
    return RankingResult(candidates=top, note=note)


@dataclass(frozen=True, slots=True)
class DispatchState:
    theta_high: float
    theta_low: float
    alert_gap: timedelta = timedelta(hours=72)
    armed: bool = True
    last_alert_time: datetime | None = None

    def __post_init__(self) -> None:
        if not self.theta_high > self.theta_low >= 0:
            raise ValidationError("need theta_high > theta_low >= 0")
        if self.alert_gap <= timedelta(0):
            raise ValidationError("alert gap must be positive")


def should_dispatch(
    state: DispatchState, r: float, now: datetime
) -> tuple[bool, DispatchState]:
    """Hysteresis gate: fire only when armed and risk exceeds the high
    threshold with the rate-limit gap elapsed; re-arm only below the
    low threshold. The gap test is strict so at most
    ceil(horizon/gap) alerts fit in any horizon."""
    armed = state.armed
    if not armed and r < state.theta_low:
        armed = True
    gap_ok = (
        state.last_alert_time is None
        or (now - state.last_alert_time) > state.alert_gap
    )
    if armed and r > state.theta_high and gap_ok:
        return (True, replace(state, armed=False, last_alert_time=now))
    if armed != state.armed:
        return (False, replace(state, armed=armed))
    return (False, state)


@dataclass(frozen=True, slots=True)
class Trigger:
    timestamp: datetime
    subject: str
    item: str
    reason: str
    synergy: bool
    h: float
    p: float
    a: float
    utility: float
    kind: str = "suggestion"


def build_trigger(
    top: ScoredCandidate, ctx: Context, subject: str, reason: str, kind: str = "suggestion"
) -> Trigger:
    return Trigger(
        timestamp=ctx.now,
        subject=subject,
        item=top.item,
        reason=reason,
        synergy=ctx.natural_trigger,
        h=top.h,
        p=top.p,
        a=top.a,
        utility=top.utility,
        kind=kind,
    )


def trigger_to_audit_line(trigger: Trigger, accepted: bool | None = None) -> str:
    from .ingest import format_timestamp

    record = {
        "timestamp": format_timestamp(trigger.timestamp),
        "subject": trigger.subject,
        "kind": trigger.kind,
        "item": trigger.item,
        "reason": trigger.reason,
        "synergy": trigger.synergy,
        "h": round(trigger.h, 6),
        "p": round(trigger.p, 6),
        "a": round(trigger.a, 6),
        "utility": round(trigger.utility, 6),
    }
    if accepted is not None:
        record["accepted"] = accepted
    return json.dumps(record, sort_keys=True)


def parse_audit_lines(text: str) -> list[dict]:
    out = []
    for line in text.splitlines():
        line = line.strip()
        if line:
            out.append(json.loads(line))
    return out
