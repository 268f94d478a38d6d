"""Outcome tables, summaries, and the safety-regression guard."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from fractions import Fraction
from typing import TextIO

from ..timebase import format_s
from .sweeps import (
    CLASSIFICATIONS,
    FORGERY_ACCEPTED,
    FORGERY_REJECTED,
    FALSE_ALARM,
    ScenarioConfig,
    SweepKind,
    SweepOutcome,
)

CSV_COLUMNS = ("theta", "delta", "policy", "classification", "post_sync_theta", "detection_margin")


def _margin(value: Fraction | None) -> str:
    # margins can be half-nanoseconds; round toward zero for display only
    return "" if value is None else format_s(int(value))


def outcome_row(outcome: SweepOutcome) -> list[str]:
    return [
        format_s(outcome.theta),
        format_s(outcome.delta),
        outcome.policy,
        outcome.classification,
        format_s(outcome.post_sync_theta),
        _margin(outcome.detection_margin),
    ]


def write_csv(outcomes: list[SweepOutcome], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for outcome in outcomes:
        writer.writerow(outcome_row(outcome))


def to_csv(outcomes: list[SweepOutcome]) -> str:
    buffer = io.StringIO()
    write_csv(outcomes, buffer)
    return buffer.getvalue()


def boundary_agreement(outcomes: list[SweepOutcome], config: ScenarioConfig) -> dict:
    """Compare where the receipt check starts rejecting with ``delta + theta = Theta - B_l``.

    For each theta column the empirical boundary is the smallest delay that
    gets rejected.  Only columns whose analytic crossing falls inside the
    delay grid are scored.
    """
    lag_bound = config.receipt_lag_bound
    deltas = sorted(config.delta_grid)
    step = min((b - a for a, b in zip(deltas, deltas[1:])), default=0)
    rejected = {FORGERY_REJECTED, FALSE_ALARM}
    columns: dict[int, list[SweepOutcome]] = {}
    for outcome in outcomes:
        columns.setdefault(outcome.theta, []).append(outcome)

    deviations = []
    for theta, column in columns.items():
        analytic = config.theta_big - lag_bound - theta
        if not deltas[0] < analytic <= deltas[-1]:
            continue
        hits = [o.delta for o in column if o.classification in rejected]
        if not hits:
            deviations.append(None)
            continue
        deviations.append(abs(min(hits) - analytic))

    scored = [d for d in deviations if d is not None]
    worst = max(scored, default=Fraction(0))
    return {
        "columns_checked": len(deviations),
        "columns_missing_boundary": deviations.count(None),
        "max_deviation": format_s(int(worst)),
        "grid_step": format_s(step),
        "within_one_step": None not in deviations and worst <= step,
    }


def safety_regressions(outcomes: list[SweepOutcome], config: ScenarioConfig) -> list[SweepOutcome]:
    """Accepted forgeries that the receiver's own preconditions should have excluded.

    Receipt sweep: any accepted forgery while the clock lags by less than the
    receipt allowance.  Clock-safety and post-sync sweeps: any accepted
    forgery at all, since those labels already mean a certified or adjusted
    clock ended up outside half of Theta.  Multi-cadence: the fast-and-slow
    receiver accepting while its clock is safe for the slow instance.
    """
    accepted = [o for o in outcomes if o.classification == FORGERY_ACCEPTED]
    kind = config.sweep_kind
    if kind is SweepKind.RECEIPT_SAFETY:
        return [o for o in accepted if o.theta > -config.receipt_lag_bound]
    if kind is SweepKind.MULTICADENCE:
        half_blue = Fraction(config.theta_blue, 2)
        return [o for o in accepted if o.policy == "fast-and-slow" and o.theta > -half_blue]
    return accepted


def summarize(outcomes: list[SweepOutcome], config: ScenarioConfig) -> dict:
    counts = Counter(o.classification for o in outcomes)
    summary = {
        "kind": config.sweep_kind.value,
        "seed": config.seed,
        "points": len(outcomes),
        "counts": {name: counts.get(name, 0) for name in CLASSIFICATIONS},
        "safety_regressions": len(safety_regressions(outcomes, config)),
    }
    if config.sweep_kind is SweepKind.RECEIPT_SAFETY:
        summary["boundary_agreement"] = boundary_agreement(outcomes, config)
    return summary


def to_json(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"
