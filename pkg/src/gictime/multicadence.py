"""Two TESLA instances with different disclosure delays sharing one key chain.

A clock that is safe for the slow ("blue") instance can still lag too far for
the fast ("red") one.  The set of (offset, delay) pairs where a red forgery
gets through is a triangle; everything here is exact rational arithmetic in
nanoseconds.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

from .tesla import MhkTuple, ReceiptVerdict, authenticate, commit, derive_chain

Point = tuple[Fraction, Fraction]


class EmptyRegionError(ValueError):
    pass


@dataclass(frozen=True)
class CadencePair:
    theta_red: int
    theta_blue: int

    def __post_init__(self):
        if self.theta_red <= 0 or self.theta_blue <= 0:
            raise ValueError("disclosure delays must be positive")


@dataclass(frozen=True)
class ForgeryRegion:
    vertices: tuple[Point, Point, Point]
    centroid: Point


def forgery_conditions(theta, delta, pair: CadencePair) -> dict[str, bool]:
    """The four conditions a red forgery needs, keyed by what each one says."""
    theta, delta = Fraction(theta), Fraction(delta)
    half_red = Fraction(pair.theta_red, 2)
    half_blue = Fraction(pair.theta_blue, 2)
    return {
        "blue_clock_safe": -half_blue < theta,
        "blue_check_passes": delta + theta < half_blue,
        "red_check_passes": delta + theta < half_red,
        "red_receipt_broken": delta >= pair.theta_red,
    }


def in_forgery_region(theta, delta, pair: CadencePair) -> bool:
    return all(forgery_conditions(theta, delta, pair).values())


def forgery_region(pair: CadencePair) -> ForgeryRegion:
    if pair.theta_red >= pair.theta_blue:
        raise EmptyRegionError("no gap between the two disclosure delays")
    red = Fraction(pair.theta_red)
    half_red, half_blue = red / 2, Fraction(pair.theta_blue, 2)
    # intersections of theta = -blue/2, delta = red, delta + theta = red/2
    vertices = (
        (-half_red, red),
        (-half_blue, red),
        (-half_blue, half_red + half_blue),
    )
    centroid = (
        sum(v[0] for v in vertices) / 3,
        sum(v[1] for v in vertices) / 3,
    )
    return ForgeryRegion(vertices, centroid)


def closed_form_centroid(pair: CadencePair) -> Point:
    red, blue = Fraction(pair.theta_red), Fraction(pair.theta_blue)
    return (-blue / 3 - red / 6, 5 * red / 6 + blue / 6)


def classify_scenario(theta, pair: CadencePair) -> int:
    """1: safe for both, 2: safe for blue only, 3: broken for both.

    Exact boundary offsets go to the higher-numbered scenario.
    """
    theta = Fraction(theta)
    if theta > -Fraction(pair.theta_red, 2):
        return 1
    if theta > -Fraction(pair.theta_blue, 2):
        return 2
    return 3


class ReceiverPolicy(enum.Enum):
    FAST_ONLY = "fast-only"
    FAST_AND_SLOW = "fast-and-slow"


@dataclass(frozen=True)
class AttackOutcome:
    red_verdict: ReceiptVerdict
    blue_verdict: ReceiptVerdict
    red_forged: bool
    blue_forged: bool
    accepted: bool
    detected_at: int | None
    policy: ReceiverPolicy


def simulate_scenario2_attack(
    pair: CadencePair,
    theta: int,
    delta: int,
    policy: ReceiverPolicy,
    latency: int = 0,
    seed: bytes = b"multicadence",
    start: int = 10 * 10**9,
) -> AttackOutcome:
    """Replay the shared-key cadence with every object held back by ``delta``.

    One authentic message goes out with its blue commitment, the red
    commitment follows ``theta_blue - theta_red`` later, and the shared key is
    released ``theta_blue`` after the message.  The adversary swaps in its own
    message and, for each commitment it delivers at or after key release,
    substitutes a valid MAC over its message.  Earlier commitments are relayed
    unchanged and so do not match.
    """
    chain = derive_chain(seed, 2)
    key = chain.keys[1]
    message, spoof = b"authentic navigation data", b"spoofed navigation data"
    t_k = start + pair.theta_blue
    t_m = start
    schedule = {
        "red": MhkTuple(message, commit(key, message, 32), 1, t_m, t_k - pair.theta_red, t_k),
        "blue": MhkTuple(message, commit(key, message, 32), 1, t_m, t_k - pair.theta_blue, t_k),
    }
    lag_bounds = {"red": Fraction(pair.theta_red, 2), "blue": Fraction(pair.theta_blue, 2)}

    verdicts, forged = {}, {}
    key_arrival = t_k + latency + delta
    for label, item in schedule.items():
        delivered_h = item.t_h + latency + delta
        adversary_has_key = delivered_h >= t_k + latency
        forged[label] = adversary_has_key
        commitment = commit(key, spoof, 32) if adversary_has_key else item.commitment
        received = MhkTuple(spoof, commitment, 1, item.t_m, item.t_h, t_k)
        receipt = (item.t_m + latency + delta + theta, delivered_h + theta)
        verdicts[label] = authenticate(received, key, chain.root, lag_bounds[label], receipt)

    if policy is ReceiverPolicy.FAST_ONLY:
        accepted = verdicts["red"] is ReceiptVerdict.AUTHENTIC
        detected_at = None if accepted else key_arrival
    else:
        accepted = all(v is ReceiptVerdict.AUTHENTIC for v in verdicts.values())
        detected_at = None if accepted else key_arrival
    return AttackOutcome(
        red_verdict=verdicts["red"],
        blue_verdict=verdicts["blue"],
        red_forged=forged["red"],
        blue_forged=forged["blue"],
        accepted=accepted,
        detected_at=detected_at,
        policy=policy,
    )
