"""Grid sweeps over initial clock offset and adversary delay.

Each grid point gets its own event loop and its own clock, so points share no
mutable state and the table comes out in grid order (theta outer, delta
inner).  Keys, nonces and signatures all derive from the configured seed.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from fractions import Fraction

from ..adversary import BROADCAST, REQUEST, RESPONSE, DelayPolicy, ForgeryRefused, InFlight, delay_channel, forge_after_release
from ..clock import DriftBound, DriftPolicy, GicClock, drift_evolve
from ..crypto import Signer
from ..framing import Frame, FrameKind, read_frame
from ..multicadence import CadencePair, ReceiverPolicy, simulate_scenario2_attack
from ..tesla import MhkTuple, ReceiptVerdict, authenticate, build_instance, derive_chain
from ..timesync import (
    AdjustmentPolicy,
    CertificationState,
    SyncRefused,
    TimeServer,
    certify_clock_safety,
    measure_exchange,
    run_synchronization,
)
from ..timebase import NS_PER_S
from .channel import SimulatedChannel
from .events import EventLoop, TraceEntry

SAFE = "safe"
FORGERY_ACCEPTED = "forgery_accepted"
FORGERY_REJECTED = "forgery_rejected"
FALSE_ALARM = "false_alarm"
SYNC_REFUSED = "sync_refused"
CLASSIFICATIONS = (SAFE, FORGERY_ACCEPTED, FORGERY_REJECTED, FALSE_ALARM, SYNC_REFUSED)


class SweepKind(enum.Enum):
    RECEIPT_SAFETY = "receipt_safety"
    CLOCK_SAFETY = "clock_safety"
    POST_SYNC = "post_sync"
    MULTICADENCE = "multicadence"

    @classmethod
    def parse(cls, text: str) -> SweepKind:
        return cls(text.replace("-", "_"))


@dataclass(frozen=True)
class ScenarioConfig:
    """One sweep.  All times are integer nanoseconds.

    ``lag_bound`` is the receipt-check allowance (defaults to half of Theta).
    ``check_elapsed`` is how long after the exchange certification is
    evaluated; when it is positive the true offset also drifts, always in the
    lagging direction.  ``theta_blue`` is the slow disclosure delay for the
    multi-cadence sweep, whose fast delay is ``theta_big``.
    """

    theta_big: int
    theta_grid: tuple[int, ...]
    delta_grid: tuple[int, ...]
    base_latency: int = 0
    drift_bound: DriftBound = field(default_factory=DriftBound.zero)
    seed: int = 0
    sweep_kind: SweepKind = SweepKind.RECEIPT_SAFETY
    lag_bound: int | None = None
    check_elapsed: int = 0
    delay_leg: str = RESPONSE
    theta_blue: int | None = None
    start_time: int = 100 * NS_PER_S

    def __post_init__(self):
        object.__setattr__(self, "theta_grid", tuple(self.theta_grid))
        object.__setattr__(self, "delta_grid", tuple(self.delta_grid))
        if self.theta_big <= 0:
            raise ValueError("theta_big must be positive")
        if not self.theta_grid or not self.delta_grid:
            raise ValueError("grids must be non-empty")
        if self.base_latency < 0:
            raise ValueError("base_latency must be non-negative")
        if any(d < 0 for d in self.delta_grid):
            raise ValueError("adversary delays must be non-negative")
        if self.check_elapsed < 0:
            raise ValueError("check_elapsed must be non-negative")
        if self.delay_leg not in (REQUEST, RESPONSE):
            raise ValueError(f"delay_leg must be {REQUEST!r} or {RESPONSE!r}")
        if self.sweep_kind is SweepKind.MULTICADENCE and self.theta_blue is None:
            raise ValueError("multicadence sweep needs theta_blue")

    @property
    def receipt_lag_bound(self) -> Fraction:
        base = Fraction(self.theta_big, 2) if self.lag_bound is None else Fraction(self.lag_bound)
        return base + self.drift_bound(self.check_elapsed)

    @property
    def seed_bytes(self) -> bytes:
        return self.seed.to_bytes(8, "big", signed=True)


@dataclass(frozen=True)
class SweepOutcome:
    theta: int
    delta: int
    classification: str
    policy: str = ""
    post_sync_theta: int | None = None
    detection_margin: Fraction | None = None

    def __post_init__(self):
        if self.classification not in CLASSIFICATIONS:
            raise ValueError(f"unknown classification {self.classification!r}")


def _grid(config: ScenarioConfig):
    index = 0
    for theta in config.theta_grid:
        for delta in config.delta_grid:
            yield index, theta, delta
            index += 1


def _nonce(config: ScenarioConfig, index: int, tag: bytes = b"") -> bytes:
    return hashlib.sha256(b"nonce|" + config.seed_bytes + index.to_bytes(8, "big") + tag).digest()[:16]


def _record_trace(trace: list[str] | None, index: int, entries: list[TraceEntry], tag: str = "") -> None:
    if trace is not None:
        trace.extend(f"{index}{tag},{e.line()}" for e in entries)


# -- receipt safety ---------------------------------------------------------

class _DelayingRelay:
    """Adversary next to the receiver: hears everything one latency after
    broadcast, holds it ``delta``, and swaps in a forged commitment whenever it
    already holds the matching key by the time it transmits."""

    def __init__(self, instance, policy: DelayPolicy, latency: int, deliver):
        self.instance = instance
        self.policy = policy
        self.latency = latency
        self.deliver = deliver
        self.key: bytes | None = None
        self.forged = False

    def hear(self, loop: EventLoop, frame: Frame, sent: int) -> None:
        release = delay_channel(self.policy, InFlight(frame.to_bytes(), sent, BROADCAST, frame.seq), self.latency)
        if release is None:
            return
        if frame.kind is FrameKind.KEY:
            loop.schedule(sent + self.latency, "adversary-hears-key", lambda lp: self._learn(frame))
        # hold timer first, transmission as a follow-up at the same instant, so
        # anything the adversary learns at exactly that moment is usable
        loop.schedule(release, f"adversary-release-{frame.kind.name.lower()}",
                      lambda lp: lp.schedule(lp.now, "adversary-transmit", lambda l2: self._transmit(l2, frame)))

    def _learn(self, frame: Frame) -> None:
        self.key = frame.payload

    def _transmit(self, loop: EventLoop, frame: Frame) -> None:
        if frame.kind is not FrameKind.KEY and self.key is not None:
            try:
                forged = forge_after_release(self.instance, frame.key_index, self.key, b"spoofed nav data", loop.now)
            except ForgeryRefused:
                forged = None
            if forged is not None:
                self.forged = True
                payload = forged.message if frame.kind is FrameKind.MESSAGE else forged.commitment
                frame = Frame(frame.kind, frame.label, frame.key_index, frame.seq, payload)
        self.deliver(loop, frame.to_bytes())


def sweep_receipt_safety(config: ScenarioConfig, trace: list[str] | None = None) -> list[SweepOutcome]:
    signer = Signer.from_seed(b"provider|" + config.seed_bytes)
    chain = derive_chain(b"chain|" + config.seed_bytes, 2, signer=signer)
    if not chain.root_commitment.verify(signer.verifier):
        raise RuntimeError("root commitment does not verify")
    instance = build_instance(chain, [b"authentic nav data"], config.start_time, config.theta_big, config.theta_big)
    item = instance.schedule[0]
    lag_bound = config.receipt_lag_bound
    outcomes = []

    for index, theta, delta in _grid(config):
        clock = GicClock(theta)
        if config.check_elapsed:
            clock = drift_evolve(clock, config.check_elapsed, config.drift_bound, DriftPolicy.LAGGING)
        loop = EventLoop(start=config.start_time)
        received: dict[FrameKind, tuple[bytes, int]] = {}

        def deliver(lp: EventLoop, data: bytes, clock=clock, received=received) -> None:
            frame, _ = read_frame(data)
            received[frame.kind] = (frame.payload, clock.measure(lp.now))

        relay = _DelayingRelay(instance, DelayPolicy(delta_broadcast=delta), config.base_latency, deliver)
        frames = [
            (item.t_m, Frame(FrameKind.MESSAGE, instance.label, item.key_index, 0, item.message)),
            (item.t_h, Frame(FrameKind.COMMITMENT, instance.label, item.key_index, 1, item.commitment)),
            (item.t_k, Frame(FrameKind.KEY, instance.label, item.key_index, 2, instance.key(item.key_index))),
        ]
        for sent, frame in frames:
            loop.schedule(sent, f"provider-send-{frame.kind.name.lower()}",
                          lambda lp, frame=frame, sent=sent: relay.hear(lp, frame, sent))
        _record_trace(trace, index, loop.run())

        (message, tau_m), (commitment, tau_h) = received[FrameKind.MESSAGE], received[FrameKind.COMMITMENT]
        key = received[FrameKind.KEY][0]
        got = MhkTuple(message, commitment, item.key_index, item.t_m, item.t_h, item.t_k)
        verdict = authenticate(got, key, chain.root, lag_bound, (tau_m, tau_h), len(chain))
        accepted = verdict is ReceiptVerdict.AUTHENTIC
        if relay.forged:
            label = FORGERY_ACCEPTED if accepted else FORGERY_REJECTED
        else:
            label = SAFE if accepted else FALSE_ALARM
        margin = item.t_k - lag_bound - max(tau_m, tau_h)
        outcomes.append(SweepOutcome(theta, delta, label, detection_margin=margin))
    return outcomes


# -- clock safety and post-sync ---------------------------------------------

def _endpoints(config: ScenarioConfig) -> tuple[Signer, Signer, TimeServer]:
    provider = Signer.from_seed(b"provider|" + config.seed_bytes)
    receiver = Signer.from_seed(b"receiver|" + config.seed_bytes)
    return provider, receiver, TimeServer(provider, processing=config.base_latency)


def _leg_delay(config: ScenarioConfig, delta: int) -> DelayPolicy:
    if config.delay_leg == REQUEST:
        return DelayPolicy(delta_12=delta)
    return DelayPolicy(delta_34=delta)


def sweep_clock_safety(config: ScenarioConfig, trace: list[str] | None = None) -> list[SweepOutcome]:
    half = Fraction(config.theta_big, 2)
    provider, receiver, server = _endpoints(config)
    outcomes = []
    for index, theta, delta in _grid(config):
        policy = _leg_delay(config, delta)
        loop = EventLoop(start=config.start_time)
        channel = SimulatedChannel(loop, server, policy, config.base_latency)
        clock = GicClock(theta)
        record = measure_exchange(channel, clock, provider.verifier, receiver, _nonce(config, index))
        check_at = record.t3 + config.check_elapsed
        if config.check_elapsed:
            clock = drift_evolve(clock, config.check_elapsed, config.drift_bound, DriftPolicy.LAGGING)
        _record_trace(trace, index, loop.trace)

        state = CertificationState(record, config.drift_bound, record.t3)
        cert = certify_clock_safety(state, check_at, config.theta_big)
        clock_ok = -half < clock.theta < half
        if cert.safe:
            label = SAFE if clock_ok else FORGERY_ACCEPTED
        else:
            label = FALSE_ALARM if clock_ok else FORGERY_REJECTED
        outcomes.append(SweepOutcome(theta, delta, label, detection_margin=cert.margin))
    return outcomes


def sweep_post_sync(config: ScenarioConfig, trace: list[str] | None = None) -> list[SweepOutcome]:
    half = Fraction(config.theta_big, 2)
    provider, receiver, server = _endpoints(config)
    outcomes = []
    for index, theta, delta in _grid(config):
        policy = _leg_delay(config, delta)
        for adjustment in AdjustmentPolicy:
            loop = EventLoop(start=config.start_time)
            channel = SimulatedChannel(loop, server, policy, config.base_latency)
            clock = GicClock(theta)
            try:
                result = run_synchronization(
                    channel, clock, provider.verifier, config.theta_big, config.drift_bound,
                    receiver, adjustment, nonce=_nonce(config, index),
                )
            except SyncRefused:
                outcomes.append(SweepOutcome(theta, delta, SYNC_REFUSED, adjustment.value, clock.theta))
            else:
                after = result.clock.theta
                cert = certify_clock_safety(result.state, result.record.t3, config.theta_big)
                label = SAFE if -half < after < half else FORGERY_ACCEPTED
                outcomes.append(SweepOutcome(theta, delta, label, adjustment.value, after, cert.margin))
            _record_trace(trace, index, loop.trace, f"/{adjustment.value}")
    return outcomes


# -- multi-cadence ----------------------------------------------------------

def sweep_multicadence(config: ScenarioConfig, trace: list[str] | None = None) -> list[SweepOutcome]:
    pair = CadencePair(config.theta_big, config.theta_blue)
    outcomes = []
    for _, theta, delta in _grid(config):
        for policy in ReceiverPolicy:
            result = simulate_scenario2_attack(
                pair, theta, delta, policy, config.base_latency,
                seed=b"chain|" + config.seed_bytes, start=config.start_time,
            )
            # the spoofed message is always injected; without a usable key the
            # relayed commitment simply fails to match it
            label = FORGERY_ACCEPTED if result.accepted else FORGERY_REJECTED
            outcomes.append(SweepOutcome(theta, delta, label, policy.value))
    return outcomes


_SWEEPS = {
    SweepKind.RECEIPT_SAFETY: sweep_receipt_safety,
    SweepKind.CLOCK_SAFETY: sweep_clock_safety,
    SweepKind.POST_SYNC: sweep_post_sync,
    SweepKind.MULTICADENCE: sweep_multicadence,
}


def run_sweep(config: ScenarioConfig, trace: list[str] | None = None) -> list[SweepOutcome]:
    return _SWEEPS[config.sweep_kind](config, trace)
