"""Top-level acceptance gate: ten numbered criteria, one test each.

`pytest -v tests/test_acceptance.py` prints one PASSED/FAILED line per
criterion. Every tolerance is pinned here, next to the check it guards.
"""
from __future__ import annotations

import json
import random
import time
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from healthloop.events import (
    AllenRelation,
    CompoundEventDef,
    StreamKind,
    classify_interval_relation,
    co_occurrence,
    detect_compound_events,
)
from healthloop.habit import HabitWaveform, OccupancyGrid, update_waveform
from healthloop.ingest import parse_timestamp
from healthloop.predict import (
    DayFeatures,
    PopulationPrior,
    RiskModel,
    mine_rules,
    pool_estimate,
    risk_update,
)
from healthloop.recommend import DispatchState, should_dispatch
from healthloop.runner import (
    compare_arms,
    config_from_dict,
    events_jsonl,
    run_experiment,
    trace_csv,
)

from helpers import (
    compound_oracle,
    mine_rules_oracle,
    random_personicle,
    relation_oracle,
    ts,
)


def test_criterion_01_interval_relations_match_endpoint_oracle():
    """10,000 random interval pairs: implementation == endpoint-definition
    oracle exactly, inverse symmetry on every pair, in under 5 seconds."""
    rng = random.Random(101)
    started = time.perf_counter()
    for _ in range(10_000):
        s1 = rng.randrange(0, 20)
        e1 = s1 + rng.randrange(0, 8)  # zero-length intervals included
        s2 = rng.randrange(0, 20)
        e2 = s2 + rng.randrange(0, 8)
        got = classify_interval_relation((s1, e1), (s2, e2))
        assert got is relation_oracle((s1, e1), (s2, e2))
        assert classify_interval_relation((s2, e2), (s1, e1)) is got.inverse
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0, f"took {elapsed:.2f}s"
    print(f"criterion 1 PASS: 10000 pairs, {elapsed:.2f}s")


def _pair_count_brute_force(p, cat_a: str, cat_b: str, window_s: float) -> int:
    """Exhaustive pairwise gap matrix; nothing shared with the package."""
    ta = np.array([ev.start.timestamp() for ev in p.events if ev.category == cat_a])
    tb = np.array([ev.start.timestamp() for ev in p.events if ev.category == cat_b])
    if ta.size == 0 or tb.size == 0:
        return 0
    gaps = tb[None, :] - ta[:, None]
    count = int(((gaps >= 0) & (gaps <= window_s)).sum())
    if cat_a == cat_b:
        count -= ta.size  # zero-gap self pairings
    return count


def test_criterion_02_co_occurrence_and_compound_match_brute_force():
    """100 random personicles (up to 500 events): co-occurrence counts and
    compound-event matches equal exhaustive enumeration exactly."""
    rng = random.Random(202)
    cats = ["A", "B", "C", "D"]
    act = lambda c: (StreamKind.ACTIVITY, c)
    window_defs = [
        CompoundEventDef(name="w2", parts=(act("A"), act("B")), window_s=900),
        CompoundEventDef(name="w3", parts=(act("A"), act("B"), act("C")), window_s=1800),
    ]
    relation_defs = [
        CompoundEventDef(name="r_before", parts=(act("A"), act("B")),
                         relation=AllenRelation.BEFORE),
        CompoundEventDef(name="r_overlaps", parts=(act("C"), act("D")),
                         relation=AllenRelation.OVERLAPS),
    ]
    for case in range(100):
        n = rng.randint(300, 500) if case % 10 == 0 else rng.randint(20, 160)
        p = random_personicle(rng, n, cats, span_s=max(3600, n * 360))
        for _ in range(2):
            cat_a, cat_b = rng.choice(cats), rng.choice(cats)
            window = rng.choice([300.0, 900.0, 3600.0])
            count, _ = co_occurrence(p, cat_a, cat_b, window)
            assert count == _pair_count_brute_force(p, cat_a, cat_b, window)
        defs = window_defs + (relation_defs if n <= 200 else [])
        for cdef in defs:
            got = [tuple(d.attr("parts").split(",")) for d in detect_compound_events(p, cdef)]
            want = [tuple(p.events[i].id for i in tup) for tup in compound_oracle(p, cdef)]
            assert got == want, cdef.name
    print("criterion 2 PASS: 100 personicles, exact counts")


def test_criterion_03_rule_mining_matches_exhaustive_enumeration():
    """50 random personicles (up to 300 events, max_len 3): support, hits
    and confidence of every mined rule equal the exhaustive oracle's."""
    rng = random.Random(303)
    cats = ["a", "b", "c", "d", "e"]
    for case in range(50):
        n = rng.randint(200, 300) if case % 10 == 0 else rng.randint(20, 120)
        p = random_personicle(rng, n, cats, span_s=max(3600, n * 240))
        window = rng.choice([1200.0, 2400.0, 3600.0])
        delta = rng.choice([1200.0, 3600.0])
        min_support = rng.randint(0, 3)
        consequent = rng.choice(cats)
        got = mine_rules([p], consequent=consequent, window_s=window,
                         delta_s=delta, min_support=min_support, max_len=3)
        want = mine_rules_oracle(p, consequent, window, delta, min_support, 3)
        assert [(r.antecedent, r.support, r.hits, r.confidence) for r in got] == [
            (tuple(w["antecedent"]), w["support"], w["hits"], w["confidence"])
            for w in want
        ]
        for r, w in zip(got, want):
            assert r.lift == pytest.approx(w["lift"], rel=1e-12)
    print("criterion 3 PASS: 50 personicles, exact rule tables")


def test_criterion_04_pooling_limits_and_convexity():
    """n = 0 returns the prior exactly; at n = 1e6 the posterior mean is
    within 1e-6 relative of the sample mean; 1,000 random draws stay a
    convex combination of prior mean and sample mean."""
    prior = PopulationPrior(mu0=100.0, tau2=25.0, sigma2=40.0)
    assert pool_estimate([], prior) == (100.0, 25.0)

    big = [80.0] * 10**6
    mean, var = pool_estimate(big, prior)
    assert abs(mean - 80.0) < 1e-6 * 80.0
    assert var < prior.tau2

    rng = random.Random(404)
    for _ in range(1000):
        mu0 = rng.uniform(-50, 200)
        tau2 = rng.uniform(0.1, 50)
        sigma2 = rng.uniform(0.1, 50)
        obs = [rng.uniform(-50, 200) for _ in range(rng.randint(1, 20))]
        ybar = sum(obs) / len(obs)
        mean, var = pool_estimate(obs, PopulationPrior(mu0=mu0, tau2=tau2, sigma2=sigma2))
        lo, hi = min(mu0, ybar), max(mu0, ybar)
        assert lo - 1e-9 <= mean <= hi + 1e-9
        assert var <= tau2 + 1e-12
        assert var <= sigma2 / len(obs) + 1e-12
    print("criterion 4 PASS: pooling limits and 1000 convex draws")


def test_criterion_05_waveform_geometric_convergence():
    """Feeding a constant daily grid shrinks the max-cell error at least
    geometrically: err_t <= (1 - alpha)^t + 1e-12 for t = 1..200."""
    shape = OccupancyGrid.zeros().values.shape
    rng = np.random.default_rng(505)
    target = OccupancyGrid(values=rng.uniform(0.0, 1.0, size=shape))
    for alpha in (0.1, 0.5, 0.9):
        waveform = HabitWaveform(alpha=alpha)  # zero start, error <= 1
        for t in range(1, 201):
            waveform = update_waveform(waveform, target)
            err = float(np.max(np.abs(waveform.grid.values - target.values)))
            assert err <= (1 - alpha) ** t + 1e-12, (alpha, t, err)
    print("criterion 5 PASS: three alphas, 200 steps each")


def test_criterion_06_risk_stays_under_geometric_bound_for_ten_years():
    """3,650 daily updates with every feature at its pinned maximum keep
    the accumulator below Fmax / (1 - beta) + 1e-9."""
    worst = DayFeatures(
        high_sugar_meals=3, high_fat_meals=3, sedentary_hours=24,
        negative_mood=10, aqi_excess=3, exercise_minutes=0,
    )
    fmax = 3 * 1.0 + 3 * 1.0 + 24 * 0.1 + 10 * 0.5 + 3 * 0.5  # = 14.9
    model = RiskModel()
    bound = fmax / (1 - model.beta) + 1e-9
    for _ in range(3650):
        model = risk_update(model, worst)
        assert model.r <= bound
    print(f"criterion 6 PASS: R <= {bound:.6f} over 3650 days")


def test_criterion_07_dispatch_never_chatters():
    """1,000 fuzzed risk trajectories: alerts only above theta_high, never
    two within the alert gap, never a repeat without an intermediate dip
    below theta_low."""
    rng = random.Random(707)
    for _ in range(1000):
        theta_low = rng.uniform(2.0, 10.0)
        theta_high = theta_low + rng.uniform(1.0, 10.0)
        gap_hours = rng.choice([6, 24, 72])
        state = DispatchState(
            theta_high=theta_high, theta_low=theta_low,
            alert_gap=timedelta(hours=gap_hours),
        )
        r = rng.uniform(0.0, theta_high)
        path: list[float] = []
        alerts: list[int] = []
        for hour in range(400):
            u = rng.random()
            if u < 0.05:
                r = theta_high + rng.uniform(0.1, 5.0)  # spike
            elif u < 0.10:
                r = max(0.0, theta_low - rng.uniform(0.1, 2.0))  # dip
            else:
                r = max(0.0, r + rng.uniform(-1.5, 1.5))
            path.append(r)
            fired, state = should_dispatch(state, r, ts(hour * 3600))
            if fired:
                alerts.append(hour)
        for a, b in zip(alerts, alerts[1:]):
            assert (b - a) * 3600 > gap_hours * 3600  # strict rate limit
            assert min(path[a + 1 : b]) < theta_low  # re-armed in between
        for a in alerts:
            assert path[a] > theta_high
    print("criterion 7 PASS: 1000 trajectories")


def test_criterion_08_wedding_alerts_once_commute_placebo_never():
    """The indulgent-weekend template dispatches exactly one alert within
    48 simulated hours after the weekend; the commute placebo arm never
    engages the loop at all."""
    wedding = run_experiment(config_from_dict({"scenario": "wedding_weekend"}))
    alerts = [
        json.loads(line) for line in wedding.audit_lines
        if json.loads(line)["kind"] == "risk_alert"
    ]
    assert len(alerts) == 1
    weekend_end = datetime(2017, 5, 8, tzinfo=timezone.utc)  # after days 5-6
    at = parse_timestamp(alerts[0]["timestamp"])
    assert weekend_end <= at <= weekend_end + timedelta(hours=48)

    placebo = run_experiment(config_from_dict({"scenario": "commute_lunch"}), arm="placebo")
    assert placebo.audit_lines == ()
    assert placebo.metrics["risk_alerts"] == 0.0
    print(f"criterion 8 PASS: one alert at {alerts[0]['timestamp']}, placebo silent")


def test_criterion_09_active_arm_beats_placebo_across_seeds():
    """20 paired seeds on the commute template: active time-in-range beats
    placebo in at least 17, mean delta positive, sign test p < 0.05,
    all inside 60 seconds."""
    started = time.perf_counter()
    result = compare_arms(config_from_dict({"scenario": "commute_lunch"}),
                          seeds=list(range(1, 21)))
    elapsed = time.perf_counter() - started
    assert result.positives >= 17, result.summary
    assert result.mean_delta > 0.0
    assert result.p_value < 0.05
    assert elapsed < 60.0, f"took {elapsed:.1f}s"
    print(
        f"criterion 9 PASS: {result.positives}/20 positive, "
        f"mean delta {result.mean_delta:+.4f}, p {result.p_value:.3g}, {elapsed:.1f}s"
    )


def test_criterion_10_runs_are_byte_identical():
    """Repeating any (config, seed) reproduces the trace CSV byte for byte
    (and the audit log, metrics, and event log with it)."""
    cases = [
        ({"scenario": "commute_lunch"}, 1, "active"),
        ({"scenario": "wedding_weekend"}, 3, None),
        ({"scenario": "commute_lunch", "alpha": 0.2, "patient": {"k_c": 2.5}}, 2, "placebo"),
    ]
    for data, seed, arm in cases:
        cfg = config_from_dict(data)
        first = run_experiment(cfg, seed=seed, arm=arm)
        second = run_experiment(cfg, seed=seed, arm=arm)
        assert trace_csv(first) == trace_csv(second)
        assert first.audit_lines == second.audit_lines
        assert first.metrics == second.metrics
        assert events_jsonl(first) == events_jsonl(second)
    print("criterion 10 PASS: 3 configs, byte-identical artifacts")
