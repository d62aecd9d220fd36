"""HTTP service wrapping the simulation core.

Stateless batch-compute endpoints: every request carries its full
input and every response carries the rendered artifacts, so runs stay
reproducible no matter which client asked.
"""
from __future__ import annotations

import io
from datetime import datetime, time, timedelta, timezone
from typing import Any

import yaml
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .errors import HealthLoopError
from .events import Personicle
from .habit import HabitWaveform, update_waveform, waveform_to_csv, week_occupancy
from .ingest import parse_event_lines
from .predict import (
    DEFAULT_RISK_WEIGHTS,
    RISK_FEATURES,
    RiskModel,
    day_features,
    mine_rules,
    risk_update,
)
from .runner import (
    CompareResult,
    RunResult,
    audit_text,
    compare_arms,
    compare_csv,
    config_from_dict,
    daily_csv,
    events_jsonl,
    metrics_csv,
    run_experiment,
    trace_csv,
)
from .scenarios import SCENARIO_NAMES


class RunRequest(BaseModel):
    config: dict[str, Any]
    seed: int | None = None
    arm: str | None = None


class RunResponse(BaseModel):
    scenario: str
    arm: str
    seed: int
    metrics: dict[str, float]
    summary: str
    metrics_csv: str
    trace_csv: str
    daily_csv: str
    audit_jsonl: str
    events_jsonl: str


class CompareRequest(BaseModel):
    config: dict[str, Any]
    seeds: list[int]


class CompareRow(BaseModel):
    seed: int
    tir_active: float
    tir_placebo: float
    delta: float


class CompareResponse(BaseModel):
    rows: list[CompareRow]
    mean_delta: float
    positives: int
    negatives: int
    ties: int
    p_value: float
    summary: str
    csv: str


class MineRequest(BaseModel):
    events_jsonl: str
    consequent: str
    window_minutes: float = 240.0
    delta_minutes: float = 240.0
    min_support: int = 2
    max_len: int = Field(default=3, ge=1, le=3)


class RuleModel(BaseModel):
    antecedent: list[str]
    support: int
    hits: int
    confidence: float
    lift: float


class MineResponse(BaseModel):
    rules: list[RuleModel]
    csv: str
    events: int
    rejects: int


class ReportRequest(BaseModel):
    events_jsonl: str
    alpha: float = 0.1
    beta: float = 0.9


class ReportResponse(BaseModel):
    waveform_csv: str
    risk_csv: str
    days: int
    events: int
    rejects: int


class ValidateRequest(BaseModel):
    kind: str  # "config" or "events"
    content: str


class ValidateResponse(BaseModel):
    valid: bool
    errors: list[str]
    events: int = 0
    rejects: int = 0


def _run_response(result: RunResult) -> RunResponse:
    return RunResponse(
        scenario=result.scenario,
        arm=result.arm,
        seed=result.seed,
        metrics=dict(result.metrics),
        summary=result.summary,
        metrics_csv=metrics_csv([result]),
        trace_csv=trace_csv(result),
        daily_csv=daily_csv(result),
        audit_jsonl=audit_text(result),
        events_jsonl=events_jsonl(result),
    )


def _compare_response(result: CompareResult) -> CompareResponse:
    return CompareResponse(
        rows=[
            CompareRow(
                seed=int(row["seed"]),
                tir_active=row["tir_active"],
                tir_placebo=row["tir_placebo"],
                delta=row["delta"],
            )
            for row in result.rows
        ],
        mean_delta=result.mean_delta,
        positives=result.positives,
        negatives=result.negatives,
        ties=result.ties,
        p_value=result.p_value,
        summary=result.summary,
        csv=compare_csv(result),
    )


def rules_csv(rules) -> str:
    buf = io.StringIO()
    buf.write("antecedent,window_s,consequent,support,hits,confidence,lift\n")
    for rule in rules:
        antecedent = "|".join(rule.antecedent)
        buf.write(
            f"{antecedent},{rule.window_s:.0f},{rule.consequent},"
            f"{rule.support},{rule.hits},{rule.confidence:.6f},{rule.lift:.6f}\n"
        )
    return buf.getvalue()


def _personicles_by_subject(events) -> list[Personicle]:
    by_subject: dict[str, list] = {}
    for ev in events:
        by_subject.setdefault(ev.subject, []).append(ev)
    return [
        Personicle(subject=subject, events=tuple(evs))
        for subject, evs in sorted(by_subject.items())
    ]


def build_report(events, alpha: float, beta: float) -> tuple[str, str, int]:
    """Waveform and risk-trajectory CSVs over the log's calendar span.

    Only complete weeks feed the waveform; a partial trailing week would
    drag the untouched weekday columns toward zero.
    """
    personicles = _personicles_by_subject(events)
    if not personicles:
        empty_risk = "day,date,risk," + ",".join(RISK_FEATURES) + "\n"
        return (waveform_to_csv(HabitWaveform(alpha=alpha)), empty_risk, 0)
    p = personicles[0]  # reports are single-subject; first subject wins
    span = p.span
    first_day = span[0].date()
    last_day = span[1].date()
    n_days = (last_day - first_day).days + 1

    waveform = HabitWaveform(alpha=alpha)
    risk = RiskModel(beta=beta, weights=dict(DEFAULT_RISK_WEIGHTS))
    buf = io.StringIO()
    buf.write("day,date,risk," + ",".join(RISK_FEATURES) + "\n")
    for index in range(n_days):
        day = first_day + timedelta(days=index)
        day_start = datetime.combine(day, time.min, tzinfo=timezone.utc)
        aqi = 0.0
        for ev in p.events:
            if ev.stream.value == "environment" and day_start <= ev.start < day_start + timedelta(days=1):
                aqi = max(aqi, float(ev.attr("aqi", 0.0) or 0.0))
        feats = day_features(p.events, day_start, aqi=aqi)
        risk = risk_update(risk, feats)
        cells = ",".join(f"{v:.6f}" for v in feats.as_dict().values())
        buf.write(f"{index},{day.isoformat()},{risk.r:.6f},{cells}\n")
        if (index + 1) % 7 == 0:
            week_start = day - timedelta(days=6)
            waveform = update_waveform(waveform, week_occupancy(p, week_start))
    return (waveform_to_csv(waveform), buf.getvalue(), n_days)


def create_app() -> FastAPI:
    app = FastAPI(title="healthloop", version=__version__)

    @app.exception_handler(HealthLoopError)
    async def domain_error(_, exc: HealthLoopError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.get("/health")
    async def health() -> dict[str, str]:
        return {"status": "ok", "version": __version__}

    @app.get("/scenarios")
    async def scenarios() -> dict[str, list[str]]:
        return {"scenarios": list(SCENARIO_NAMES)}

    @app.post("/run", response_model=RunResponse)
    async def run(req: RunRequest) -> RunResponse:
        config = config_from_dict(req.config)
        result = run_experiment(config, seed=req.seed, arm=req.arm)
        return _run_response(result)

    @app.post("/compare", response_model=CompareResponse)
    async def compare(req: CompareRequest) -> CompareResponse:
        config = config_from_dict(req.config)
        result = compare_arms(config, req.seeds)
        return _compare_response(result)

    @app.post("/mine", response_model=MineResponse)
    async def mine(req: MineRequest) -> MineResponse:
        report = parse_event_lines(io.StringIO(req.events_jsonl))
        personicles = _personicles_by_subject(report.events)
        rules = mine_rules(
            personicles,
            consequent=req.consequent,
            window_s=req.window_minutes * 60.0,
            delta_s=req.delta_minutes * 60.0,
            min_support=req.min_support,
            max_len=req.max_len,
        )
        return MineResponse(
            rules=[
                RuleModel(
                    antecedent=list(r.antecedent),
                    support=r.support,
                    hits=r.hits,
                    confidence=r.confidence,
                    lift=r.lift,
                )
                for r in rules
            ],
            csv=rules_csv(rules),
            events=len(report.events),
            rejects=len(report.rejects),
        )

    @app.post("/report", response_model=ReportResponse)
    async def report(req: ReportRequest) -> ReportResponse:
        parsed = parse_event_lines(io.StringIO(req.events_jsonl))
        waveform, risk, days = build_report(parsed.events, req.alpha, req.beta)
        return ReportResponse(
            waveform_csv=waveform,
            risk_csv=risk,
            days=days,
            events=len(parsed.events),
            rejects=len(parsed.rejects),
        )

    @app.post("/validate", response_model=ValidateResponse)
    async def validate(req: ValidateRequest) -> ValidateResponse:
        if req.kind == "config":
            try:
                data = yaml.safe_load(req.content)
            except yaml.YAMLError as exc:
                return ValidateResponse(valid=False, errors=[f"yaml: {exc}"])
            try:
                config_from_dict(data or {})
            except HealthLoopError as exc:
                return ValidateResponse(valid=False, errors=str(exc).split("\n"))
            return ValidateResponse(valid=True, errors=[])
        if req.kind == "events":
            parsed = parse_event_lines(io.StringIO(req.content))
            errors = [f"line {r.line_no}: {r.reason}" for r in parsed.rejects]
            return ValidateResponse(
                valid=not errors,
                errors=errors,
                events=len(parsed.events),
                rejects=len(parsed.rejects),
            )
        return ValidateResponse(valid=False, errors=[f"unknown kind {req.kind!r}"])

    return app


app = create_app()
