"""Shared test fixtures: random event/personicle builders and
independent brute-force oracles used to cross-check the operators."""
from __future__ import annotations

import itertools
import random
from datetime import datetime, timedelta, timezone

from healthloop.events import (
    AllenRelation,
    CompoundEventDef,
    Event,
    Personicle,
    StreamKind,
    classify_interval_relation,
)

T0 = datetime(2017, 3, 6, tzinfo=timezone.utc)


def ts(seconds: float) -> datetime:
    return T0 + timedelta(seconds=seconds)


def make_event(
    eid: str,
    category: str,
    start_s: float,
    end_s: float | None = None,
    stream: StreamKind = StreamKind.ACTIVITY,
    subject: str = "s1",
    attrs: dict | None = None,
) -> Event:
    from healthloop.events import make_attrs

    return Event(
        id=eid,
        stream=stream,
        category=category,
        start=ts(start_s),
        end=ts(end_s) if end_s is not None else None,
        attrs=make_attrs(attrs),
        subject=subject,
    )


def random_personicle(
    rng: random.Random,
    n_events: int,
    categories: list[str],
    span_s: int = 6 * 3600,
    interval_fraction: float = 0.4,
    stream: StreamKind = StreamKind.ACTIVITY,
) -> Personicle:
    events = []
    for i in range(n_events):
        start = rng.randrange(0, span_s)
        end = None
        if rng.random() < interval_fraction:
            end = start + rng.randrange(0, 1800)
        events.append(
            make_event(
                f"e{i:04d}",
                rng.choice(categories),
                start,
                end,
                stream=stream,
            )
        )
    return Personicle(subject="s1", events=tuple(events))


# ---------------------------------------------------------------- oracles

# Endpoint-definition table for the 13 relations, evaluated top to
# bottom with first match winning; the equality rows come first so the
# table totalizes zero-length intervals the same way for every pair.
RELATION_TABLE = (
    (AllenRelation.EQUALS, lambda s1, e1, s2, e2: s1 == s2 and e1 == e2),
    (AllenRelation.STARTS, lambda s1, e1, s2, e2: s1 == s2 and e1 < e2),
    (AllenRelation.STARTED_BY, lambda s1, e1, s2, e2: s1 == s2 and e1 > e2),
    (AllenRelation.FINISHES, lambda s1, e1, s2, e2: e1 == e2 and s1 > s2),
    (AllenRelation.FINISHED_BY, lambda s1, e1, s2, e2: e1 == e2 and s1 < s2),
    (AllenRelation.BEFORE, lambda s1, e1, s2, e2: e1 < s2),
    (AllenRelation.MEETS, lambda s1, e1, s2, e2: e1 == s2),
    (AllenRelation.AFTER, lambda s1, e1, s2, e2: s1 > e2),
    (AllenRelation.MET_BY, lambda s1, e1, s2, e2: s1 == e2),
    (AllenRelation.OVERLAPS, lambda s1, e1, s2, e2: s1 < s2 < e1 < e2),
    (AllenRelation.OVERLAPPED_BY, lambda s1, e1, s2, e2: s2 < s1 < e2 < e1),
    (AllenRelation.DURING, lambda s1, e1, s2, e2: s1 > s2 and e1 < e2),
    (AllenRelation.CONTAINS, lambda s1, e1, s2, e2: s1 < s2 and e1 > e2),
)


def relation_oracle(a, b) -> AllenRelation:
    s1, e1 = a
    s2, e2 = b
    for relation, predicate in RELATION_TABLE:
        if predicate(s1, e1, s2, e2):
            return relation
    raise AssertionError(f"no relation matched {a} vs {b}")


def co_occurrence_oracle(p: Personicle, cat_a: str, cat_b: str, window_s: float):
    count = 0
    for ea in p.events:
        for eb in p.events:
            if ea is eb:
                continue
            if ea.category != cat_a or eb.category != cat_b:
                continue
            gap = (eb.start - ea.start).total_seconds()
            if 0 <= gap <= window_s:
                count += 1
    n = len(p.events)
    n_a = sum(1 for ev in p.events if ev.category == cat_a)
    n_b = sum(1 for ev in p.events if ev.category == cat_b)
    if n < 2 or n_a == 0 or n_b == 0:
        return count, 0.0
    in_window = 0
    for ea in p.events:
        for eb in p.events:
            if ea is eb:
                continue
            gap = (eb.start - ea.start).total_seconds()
            if 0 <= gap <= window_s:
                in_window += 1
    w_frac = in_window / (n * (n - 1))
    if w_frac == 0:
        return count, 0.0
    return count, count * n / (n_a * n_b * w_frac)


def _enumerate_window_tuples(events, selectors, window_s):
    """Every increasing index tuple matching the selectors in order
    whose starts all lie within window of the first element."""
    out = []

    def recurse(slot, prev, first_start, chosen):
        if slot == len(selectors):
            out.append(tuple(chosen))
            return
        for i in range(prev + 1, len(events)):
            ev = events[i]
            if first_start is not None and (ev.start - first_start).total_seconds() > window_s:
                break
            if ev.stream == selectors[slot][0] and ev.category == selectors[slot][1]:
                recurse(
                    slot + 1,
                    i,
                    first_start if first_start is not None else ev.start,
                    chosen + [i],
                )

    recurse(0, -1, None, [])
    return out


def _enumerate_relation_tuples(events, selectors, relation):
    """Every distinct-index tuple (slot order) whose consecutive parts
    satisfy the relation."""
    candidates = [
        [i for i, ev in enumerate(events) if ev.stream == sel[0] and ev.category == sel[1]]
        for sel in selectors
    ]
    out = []
    for combo in itertools.product(*candidates):
        if len(set(combo)) != len(combo):
            continue
        ok = True
        for a, b in zip(combo, combo[1:]):
            if classify_interval_relation(events[a].interval, events[b].interval) is not relation:
                ok = False
                break
        if ok:
            out.append(combo)
    return out


def compound_oracle(p: Personicle, cdef: CompoundEventDef):
    """Greedy matching by full enumeration: sweep all valid tuples in
    lexicographic order, taking each one disjoint from what is used."""
    if cdef.window_s is not None:
        tuples = _enumerate_window_tuples(p.events, cdef.parts, cdef.window_s)
    else:
        tuples = _enumerate_relation_tuples(p.events, cdef.parts, cdef.relation)
    tuples.sort()
    used: set[int] = set()
    matches = []
    for tup in tuples:
        if used.isdisjoint(tup):
            used.update(tup)
            matches.append(tup)
    return matches


def greedy_sequence_oracle(events, seq, window_s):
    """Occurrence tuples of a category sequence: same sweep as
    compound_oracle but keyed on categories alone."""
    out = []

    def recurse(slot, prev, first_start, chosen):
        if slot == len(seq):
            out.append(tuple(chosen))
            return
        for i in range(prev + 1, len(events)):
            ev = events[i]
            if first_start is not None and (ev.start - first_start).total_seconds() > window_s:
                break
            if ev.category == seq[slot]:
                recurse(
                    slot + 1,
                    i,
                    first_start if first_start is not None else ev.start,
                    chosen + [i],
                )

    recurse(0, -1, None, [])
    out.sort()
    used: set[int] = set()
    matches = []
    for tup in out:
        if used.isdisjoint(tup):
            used.update(tup)
            matches.append(tup)
    return matches


def mine_rules_oracle(p: Personicle, consequent, window_s, delta_s, min_support, max_len):
    """Exhaustive rule enumeration over the full category cross product."""
    events = p.events
    alphabet = sorted({ev.category for ev in events})
    n_total = len(events)
    n_consequent = sum(1 for ev in events if ev.category == consequent)
    base_rate = (n_consequent + 1) / (n_total + 2)
    rows = []
    for length in range(1, max_len + 1):
        for seq in itertools.product(alphabet, repeat=length):
            occurrences = greedy_sequence_oracle(events, seq, window_s)
            support = len(occurrences)
            if support < min_support or support == 0:
                continue
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
            confidence = (hits + 1) / (support + 2)
            rows.append(
                {
                    "antecedent": seq,
                    "support": support,
                    "hits": hits,
                    "confidence": confidence,
                    "lift": confidence / base_rate,
                }
            )
    rows.sort(key=lambda r: (-r["lift"], -r["confidence"], r["antecedent"]))
    return rows
