"""Delay-capable Dolev-Yao adversary.

It may hold any packet for as long as it likes, overhear synchronization
requests, and build forgeries from keys it has already heard released.  It
cannot break the hash, MAC or signature, so every forgery here is made from a
genuinely released key.
"""

from __future__ import annotations

import math
import random
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .tesla import MhkTuple, TeslaInstance, commit
from .timesync import schedule_next_query

BROADCAST = "broadcast"
REQUEST = "request"
RESPONSE = "response"
DROP = math.inf

Delay = int | float | Mapping[int, int] | Sequence[int]


class ForgeryRefused(RuntimeError):
    pass


def _check_delay(value) -> None:
    if isinstance(value, Mapping):
        values = list(value.values())
    elif isinstance(value, Sequence):
        values = list(value)
    else:
        values = [value]
    for v in values:
        if v < 0:
            raise ValueError("adversary delays must be non-negative")


@dataclass(frozen=True)
class DelayPolicy:
    """Extra delay per leg, in ns.

    Each leg takes a constant, or a per-event schedule (mapping or sequence
    keyed by event index; missing entries mean no extra delay).  ``DROP``
    blocks the leg entirely.
    """

    delta_broadcast: Delay = 0
    delta_12: Delay = 0
    delta_34: Delay = 0

    def __post_init__(self):
        for value in (self.delta_broadcast, self.delta_12, self.delta_34):
            _check_delay(value)

    def delay(self, leg: str, index: int = 0) -> int | None:
        """Extra delay for event ``index`` on ``leg``; ``None`` if dropped."""
        value = {BROADCAST: self.delta_broadcast, REQUEST: self.delta_12, RESPONSE: self.delta_34}[leg]
        if isinstance(value, Mapping):
            value = value.get(index, 0)
        elif isinstance(value, Sequence):
            value = value[index] if index < len(value) else 0
        if value == DROP:
            return None
        return int(value)


@dataclass(frozen=True)
class InFlight:
    payload: bytes
    send_time: int
    leg: str = BROADCAST
    index: int = 0


def delay_channel(policy: DelayPolicy, event: InFlight, latency: int = 0) -> int | None:
    """Delivery time of ``event``: send time plus base latency plus the leg delay."""
    extra = policy.delay(event.leg, event.index)
    if extra is None:
        return None
    return event.send_time + latency + extra


def forge_after_release(
    instance: TeslaInstance,
    key_index: int,
    released_key: bytes,
    forged_message: bytes,
    now: int,
) -> MhkTuple:
    """Commitment for an arbitrary message, built from an already-released key.

    ``now`` is adversary time, which equals provider time.  Calling this before
    the key's scheduled release is refused: the adversary cannot invert the
    chain hash to learn a key early.
    """
    original = instance.tuple_for(key_index)
    if now < original.t_k:
        raise ForgeryRefused(f"key {key_index} is not released until {original.t_k}, now {now}")
    return MhkTuple(
        message=forged_message,
        commitment=commit(released_key, forged_message, len(original.commitment) * 8),
        key_index=key_index,
        t_m=original.t_m,
        t_h=original.t_h,
        t_k=original.t_k,
    )


# -- eavesdropping on synchronization traffic --------------------------------

@dataclass(frozen=True)
class TransitModel:
    """``P(receiver-to-adversary transit < epsilon_bound) > confidence``."""

    epsilon_bound: int = 100_000_000
    confidence: float = 0.99

    def __post_init__(self):
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie strictly between 0 and 1")


@dataclass(frozen=True)
class EavesdropObservation:
    """An overheard request.

    Legacy receivers put ``tau1`` in the clear.  Hardened ones omit it, and the
    adversary's best model is a uniform ``tau1_support`` interval.
    """

    t2a: int
    tau1: int | None = None
    tau1_support: tuple[int, int] | None = None

    def __post_init__(self):
        if (self.tau1 is None) == (self.tau1_support is None):
            raise ValueError("give exactly one of tau1 or tau1_support")


def infer_vulnerability(obs: EavesdropObservation, model: TransitModel, theta_big: int) -> float | None:
    """Probability that the observed receiver lags by more than half of Theta.

    ``None`` means inconclusive: nothing in the evidence places the clock in
    the broken region.
    """
    half = Fraction(theta_big, 2)
    if obs.tau1 is not None:
        estimate = obs.tau1 - obs.t2a
        if estimate + model.epsilon_bound < -half:
            return model.confidence
        return None
    low, high = obs.tau1_support
    if high <= low:
        raise ValueError("empty tau1 support")
    threshold = obs.t2a - model.epsilon_bound - half
    mass = min(max((threshold - low) / Fraction(high - low), Fraction(0)), Fraction(1))
    if mass == 0:
        return None
    return float(mass) * model.confidence


def hardened_posterior_samples(
    n: int,
    next_required_t: int,
    lambda_slack: float,
    theta_big: int,
    theta_spread: int,
    rng: random.Random,
) -> tuple[np.ndarray, np.ndarray]:
    """Episodes against an adversary sitting next to the receiver (zero transit).

    Each receiver has an offset drawn uniformly from ``[-theta_spread,
    theta_spread]`` and sends when its own clock reads the randomized query
    time.  Returns ``(theta, t - t2)`` in ns; the adversary sees only the
    second array.
    """
    theta = np.empty(n, dtype=np.int64)
    observed = np.empty(n, dtype=np.int64)
    for i in range(n):
        offset = rng.randint(-theta_spread, theta_spread)
        tau1 = schedule_next_query(next_required_t, lambda_slack, theta_big, rng)
        t2 = tau1 - offset
        theta[i] = offset
        observed[i] = next_required_t - t2
    return theta, observed


# -- waiting time for a vulnerable receiver ----------------------------------

@dataclass(frozen=True)
class PoissonFit:
    mean_interarrival: float
    count: int
    span: float = field(default=0.0)

    @property
    def rate(self) -> float:
        return 1.0 / self.mean_interarrival

    @property
    def expected_wait(self) -> float:
        """Expected time to the next vulnerable observation (memoryless)."""
        return self.mean_interarrival


def poisson_mle(event_times: Sequence[float] | np.ndarray) -> PoissonFit:
    """MLE of the mean gap between events of a homogeneous Poisson stream.

    Uses the observed gaps, so the estimate is ``span / (count - 1)``.
    """
    times = np.sort(np.asarray(event_times, dtype=float))
    if times.size < 2:
        raise ValueError("need at least two events")
    span = float(times[-1] - times[0])
    if span <= 0:
        raise ValueError("events span zero time")
    return PoissonFit(span / (times.size - 1), int(times.size), span)
