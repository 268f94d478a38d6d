from .channel import SimulatedChannel
from .events import EventLoop, TraceEntry, run_event_loop
from .report import boundary_agreement, safety_regressions, summarize, to_csv, to_json, write_csv
from .sweeps import (
    CLASSIFICATIONS,
    FALSE_ALARM,
    FORGERY_ACCEPTED,
    FORGERY_REJECTED,
    SAFE,
    SYNC_REFUSED,
    ScenarioConfig,
    SweepKind,
    SweepOutcome,
    run_sweep,
    sweep_clock_safety,
    sweep_multicadence,
    sweep_post_sync,
    sweep_receipt_safety,
)

__all__ = [
    "CLASSIFICATIONS",
    "EventLoop",
    "FALSE_ALARM",
    "FORGERY_ACCEPTED",
    "FORGERY_REJECTED",
    "SAFE",
    "SYNC_REFUSED",
    "ScenarioConfig",
    "SimulatedChannel",
    "SweepKind",
    "SweepOutcome",
    "TraceEntry",
    "boundary_agreement",
    "run_event_loop",
    "run_sweep",
    "safety_regressions",
    "summarize",
    "sweep_clock_safety",
    "sweep_multicadence",
    "sweep_post_sync",
    "sweep_receipt_safety",
    "to_csv",
    "to_json",
    "write_csv",
]
