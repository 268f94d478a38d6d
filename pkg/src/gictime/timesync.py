"""Hardened two-way synchronization for the GIC.

The exchange deliberately never transmits the receiver send time: the request
carries only a nonce and a signature, and the send time stays local.  From the
four event times the receiver derives provable offset bounds, certifies how
long its clock stays usable for TESLA receipt checks, picks a safe adjustment,
and refuses when the round trip is too long to pick one.

Wire layout of both messages (big-endian)::

    u16  body length
    u8   version (1)
    u8   kind (1 request, 2 response)
    16B  nonce
    i64  t2 ns          (response only)
    i64  t3 ns          (response only)
    u16  signature length S
    S    Ed25519 signature

The request signature covers ``b"gictime/nts-req/v1|" + nonce``; the response
signature covers ``b"gictime/nts-resp/v1|" + nonce + t2 + t3``.
"""

from __future__ import annotations

import enum
import math
import random
import secrets
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Protocol

from .clock import BoundFunction, ClockReader, DriftBound
from .crypto import Signer, Verifier
from .timebase import as_fraction, ceil_fraction

VERSION = 1
NONCE_BYTES = 16
KIND_REQUEST = 1
KIND_RESPONSE = 2
REQ_CONTEXT = b"gictime/nts-req/v1|"
RESP_CONTEXT = b"gictime/nts-resp/v1|"
INTERIOR_MARGIN = 1  # ns; keeps lower/upper policies strictly inside the interval
BISECTION_TOLERANCE = 1_000  # ns
_BISECTION_CAP = 100 * 365 * 86_400 * 10**9


class WireError(ValueError):
    pass


class SyncError(Exception):
    pass


class SyncRefused(SyncError):
    """Round trip too long to pick any safe adjustment; the clock was not touched."""

    def __init__(self, round_trip: int, theta_big: int):
        super().__init__(f"round trip {round_trip} ns leaves no safe adjustment for Theta={theta_big} ns")
        self.round_trip = round_trip
        self.theta_big = theta_big


class ResponseInvalid(SyncError):
    pass


class SyncTimeout(SyncError):
    def __init__(self, posture: TimeoutPosture, retry_at: int | None = None):
        super().__init__(f"no response (posture: {posture.value})")
        self.posture = posture
        self.retry_at = retry_at


class TimeoutPosture(enum.Enum):
    SHUTDOWN = "shutdown"
    RANDOMIZED_RETRY = "randomized-retry"


class AdjustmentPolicy(enum.Enum):
    MIDPOINT = "midpoint"
    LOWER = "lower"
    UPPER = "upper"


# -- messages ---------------------------------------------------------------

def _pack(kind: int, nonce: bytes, times: bytes, signature: bytes) -> bytes:
    body = struct.pack(">BB", VERSION, kind) + nonce + times + struct.pack(">H", len(signature)) + signature
    return struct.pack(">H", len(body)) + body


def _unpack(data: bytes) -> tuple[int, bytes, bytes, bytes]:
    if len(data) < 2:
        raise WireError("truncated length prefix")
    (length,) = struct.unpack_from(">H", data)
    body = data[2:]
    if len(body) != length:
        raise WireError("length prefix does not match record")
    if length < 2 + NONCE_BYTES + 2:
        raise WireError("record too short")
    version, kind = struct.unpack_from(">BB", body)
    if version != VERSION:
        raise WireError(f"unsupported version {version}")
    nonce = body[2 : 2 + NONCE_BYTES]
    offset = 2 + NONCE_BYTES
    times = b""
    if kind == KIND_RESPONSE:
        times = body[offset : offset + 16]
        if len(times) != 16:
            raise WireError("record too short")
        offset += 16
    elif kind != KIND_REQUEST:
        raise WireError(f"unknown kind {kind}")
    if len(body) < offset + 2:
        raise WireError("record too short")
    (sig_len,) = struct.unpack_from(">H", body, offset)
    signature = body[offset + 2 :]
    if len(signature) != sig_len:
        raise WireError("signature length mismatch")
    return kind, nonce, times, signature


@dataclass(frozen=True)
class NtsRequest:
    nonce: bytes
    signature: bytes

    @classmethod
    def create(cls, signer: Signer, nonce: bytes) -> NtsRequest:
        if len(nonce) != NONCE_BYTES:
            raise ValueError(f"nonce must be {NONCE_BYTES} bytes")
        return cls(nonce, signer.sign(REQ_CONTEXT + nonce))

    def verify(self, verifier: Verifier) -> bool:
        return verifier.verify(self.signature, REQ_CONTEXT + self.nonce)

    def to_bytes(self) -> bytes:
        return _pack(KIND_REQUEST, self.nonce, b"", self.signature)

    @classmethod
    def from_bytes(cls, data: bytes) -> NtsRequest:
        kind, nonce, _, signature = _unpack(data)
        if kind != KIND_REQUEST:
            raise WireError("not a request")
        return cls(nonce, signature)


@dataclass(frozen=True)
class NtsResponse:
    nonce: bytes
    t2: int
    t3: int
    signature: bytes

    @staticmethod
    def signed_bytes(nonce: bytes, t2: int, t3: int) -> bytes:
        return RESP_CONTEXT + nonce + struct.pack(">qq", t2, t3)

    @classmethod
    def create(cls, signer: Signer, nonce: bytes, t2: int, t3: int) -> NtsResponse:
        return cls(nonce, t2, t3, signer.sign(cls.signed_bytes(nonce, t2, t3)))

    def verify(self, verifier: Verifier) -> bool:
        return verifier.verify(self.signature, self.signed_bytes(self.nonce, self.t2, self.t3))

    def to_bytes(self) -> bytes:
        return _pack(KIND_RESPONSE, self.nonce, struct.pack(">qq", self.t2, self.t3), self.signature)

    @classmethod
    def from_bytes(cls, data: bytes) -> NtsResponse:
        kind, nonce, times, signature = _unpack(data)
        if kind != KIND_RESPONSE:
            raise WireError("not a response")
        t2, t3 = struct.unpack(">qq", times)
        return cls(nonce, t2, t3, signature)


# -- measurement ------------------------------------------------------------

@dataclass(frozen=True)
class SyncRecord:
    """Event times of one exchange.  ``tau1`` never leaves the receiver."""

    tau1: int = field(repr=False)
    t2: int
    t3: int
    tau4: int

    def __post_init__(self):
        if self.t3 < self.t2:
            raise ValueError("t3 precedes t2")
        if self.tau4 < self.tau1:
            raise ValueError("tau4 precedes tau1")

    @property
    def lag_slack(self) -> int:
        """``t2 - tau1``: how far behind the clock might be."""
        return self.t2 - self.tau1

    @property
    def lead_slack(self) -> int:
        return self.tau4 - self.t3

    @property
    def round_trip(self) -> int:
        return self.lead_slack + self.lag_slack

    def shifted(self, delta_theta: int) -> SyncRecord:
        """The same exchange as seen by the clock after subtracting ``delta_theta``."""
        return SyncRecord(self.tau1 - delta_theta, self.t2, self.t3, self.tau4 - delta_theta)


def theta_bounds(record: SyncRecord) -> tuple[int, int]:
    """Offset bounds that hold however long the channel delayed either leg."""
    return -record.lag_slack, record.lead_slack


def nts_midpoint(record: SyncRecord) -> Fraction:
    return Fraction(record.tau1 + record.tau4 - record.t2 - record.t3, 2)


# -- certification ----------------------------------------------------------

def _bisect_crossing(bound: BoundFunction, level: Fraction) -> Fraction | None:
    if bound(0) >= level:
        return Fraction(0)
    hi = 1
    while bound(hi) < level:
        hi *= 2
        if hi > _BISECTION_CAP:
            return None
    lo = hi // 2
    while hi - lo > BISECTION_TOLERANCE:
        mid = (lo + hi) // 2
        if bound(mid) >= level:
            hi = mid
        else:
            lo = mid
    return Fraction(hi)


def solve_crossing(bound: BoundFunction, level: Fraction, method: str = "auto") -> Fraction | None:
    """Elapsed time at which ``bound`` first reaches ``level`` (``None``: never).

    ``closed`` needs a :class:`DriftBound`; ``bisect`` works on any monotone
    bound and is accurate to one microsecond.
    """
    if method == "auto":
        method = "closed" if isinstance(bound, DriftBound) else "bisect"
    if method == "closed":
        return bound.crossing(level)
    if method == "bisect":
        return _bisect_crossing(bound, level)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class CertificationState:
    record: SyncRecord
    drift_bound: BoundFunction
    sync_time: int

    def _drift(self, t: int) -> Fraction:
        if t < self.sync_time:
            raise ValueError("certification queried before its synchronization")
        return self.drift_bound(t - self.sync_time)

    def lag_bound(self, t: int) -> Fraction:
        return self.record.lag_slack + self._drift(t)

    def lead_bound(self, t: int) -> Fraction:
        return self.record.lead_slack + self._drift(t)


@dataclass(frozen=True)
class Certification:
    safe: bool
    safe_until: int | None = None
    reason: str | None = None
    lag_margin: Fraction = Fraction(0)
    lead_margin: Fraction = Fraction(0)

    @property
    def margin(self) -> Fraction:
        return min(self.lag_margin, self.lead_margin)


LAG_RISK = "lag_risk"
FALSE_ALARM_RISK = "false_alarm_risk"


def safe_until(state: CertificationState, theta_big: int, method: str = "auto") -> int | None:
    """First provider instant at which either safety condition fails.

    The clock is usable strictly before the returned time; ``None`` means the
    bound never grows enough to fail.
    """
    half = Fraction(theta_big, 2)
    crossings = [
        solve_crossing(state.drift_bound, half - state.record.lead_slack, method),
        solve_crossing(state.drift_bound, half - state.record.lag_slack, method),
    ]
    finite = [c for c in crossings if c is not None]
    if not finite:
        return None
    return state.sync_time + ceil_fraction(min(finite))


def certify_clock_safety(
    state: CertificationState, t_now: int, theta_big: int, method: str = "auto"
) -> Certification:
    half = Fraction(theta_big, 2)
    lag_margin = half - state.lag_bound(t_now)
    lead_margin = half - state.lead_bound(t_now)
    if lag_margin <= 0:
        return Certification(False, None, LAG_RISK, lag_margin, lead_margin)
    if lead_margin <= 0:
        return Certification(False, None, FALSE_ALARM_RISK, lag_margin, lead_margin)
    return Certification(True, safe_until(state, theta_big, method), None, lag_margin, lead_margin)


# -- adjustment -------------------------------------------------------------

def adjustment_interval(record: SyncRecord, theta_big: int) -> tuple[Fraction, Fraction]:
    """Open interval of adjustments that leave the clock within half of Theta."""
    half = Fraction(theta_big, 2)
    return record.lead_slack - half, half - record.lag_slack


def select_adjustment(
    record: SyncRecord,
    theta_big: int,
    policy: AdjustmentPolicy = AdjustmentPolicy.MIDPOINT,
    margin: int = INTERIOR_MARGIN,
) -> int:
    """Pick an integer-nanosecond adjustment strictly inside the safe interval.

    Raises :class:`SyncRefused` when the round trip reaches Theta, or when the
    interval is too narrow to hold a whole nanosecond.
    """
    if record.round_trip >= theta_big:
        raise SyncRefused(record.round_trip, theta_big)
    lo, hi = adjustment_interval(record, theta_big)
    lo_int = math.floor(lo) + 1
    hi_int = ceil_fraction(hi) - 1
    if lo_int > hi_int:
        raise SyncRefused(record.round_trip, theta_big)
    if policy is AdjustmentPolicy.MIDPOINT:
        value = round(nts_midpoint(record))
    elif policy is AdjustmentPolicy.LOWER:
        value = ceil_fraction(lo + margin)
    elif policy is AdjustmentPolicy.UPPER:
        value = math.floor(hi - margin)
    else:
        raise ValueError(policy)
    return min(max(value, lo_int), hi_int)


def next_sync_time(
    record: SyncRecord,
    delta_theta: int,
    theta_big: int,
    drift_bound: BoundFunction,
    sync_time: int,
    method: str = "auto",
) -> int | None:
    """Latest (exclusive) provider time by which the next exchange must happen."""
    state = CertificationState(record.shifted(delta_theta), drift_bound, sync_time)
    return safe_until(state, theta_big, method)


def schedule_next_query(
    next_required_t: int,
    lambda_slack: float,
    theta_big: int,
    rng: random.Random | None = None,
) -> int:
    """Randomized send time ``t - u`` with ``u`` uniform on ``(0, 2*lambda*Theta)``."""
    if lambda_slack < 1:
        raise ValueError("lambda_slack must be at least 1")
    rng = rng or random.SystemRandom()
    width = math.floor(as_fraction(lambda_slack) * 2 * theta_big)
    if width < 2:
        raise ValueError("query window narrower than two nanoseconds")
    return next_required_t - rng.randint(1, width - 1)


# -- protocol ---------------------------------------------------------------

class Channel(Protocol):
    """Duplex transport between receiver and time provider.

    ``now`` is true (provider-frame) time at the receiver; ``exchange`` returns
    the response bytes and their true arrival time, or ``None`` if nothing came
    back.
    """

    def now(self) -> int: ...

    def exchange(self, request: bytes) -> tuple[bytes, int] | None: ...


class TimeServer:
    """Stateless provider endpoint; safe to call from many threads."""

    def __init__(
        self,
        signer: Signer,
        processing: int = 0,
        receiver_keys: list[Verifier] | None = None,
    ):
        self.signer = signer
        self.processing = processing
        self.receiver_keys = receiver_keys

    @property
    def verifier(self) -> Verifier:
        return self.signer.verifier

    def handle(self, request: bytes, t2: int, t3: int | Callable[[], int] | None = None) -> bytes | None:
        """Answer ``request`` received at ``t2``.

        ``t3`` defaults to ``t2`` plus the processing time; a live server
        passes its clock instead so the send time is read just before signing.
        """
        try:
            parsed = NtsRequest.from_bytes(request)
        except WireError:
            return None
        if self.receiver_keys is not None and not any(parsed.verify(k) for k in self.receiver_keys):
            return None
        if t3 is None:
            t3 = t2 + self.processing
        elif callable(t3):
            t3 = max(t3(), t2)
        return NtsResponse.create(self.signer, parsed.nonce, t2, t3).to_bytes()


@dataclass(frozen=True)
class SyncResult:
    record: SyncRecord
    delta_theta: int
    state: CertificationState
    next_sync_time: int | None
    clock: ClockReader


def measure_exchange(
    channel: Channel,
    clock: ClockReader,
    provider: Verifier,
    signer: Signer,
    nonce: bytes | None = None,
    theta_big: int | None = None,
    posture: TimeoutPosture = TimeoutPosture.SHUTDOWN,
    next_required: int | None = None,
    lambda_slack: float = 1.0,
    rng: random.Random | None = None,
    on_request: Callable[[bytes], None] | None = None,
) -> SyncRecord:
    """Send one signed request and return the validated four event times."""
    nonce = nonce if nonce is not None else secrets.token_bytes(NONCE_BYTES)
    request = NtsRequest.create(signer, nonce).to_bytes()
    if on_request is not None:
        on_request(request)
    tau1 = clock.measure(channel.now())
    reply = channel.exchange(request)
    if reply is None:
        retry_at = None
        if posture is TimeoutPosture.RANDOMIZED_RETRY and next_required is not None and theta_big is not None:
            retry_at = schedule_next_query(next_required, lambda_slack, theta_big, rng)
        raise SyncTimeout(posture, retry_at)
    payload, arrival = reply
    tau4 = clock.measure(arrival)
    try:
        response = NtsResponse.from_bytes(payload)
    except WireError as exc:
        raise ResponseInvalid(f"malformed response: {exc}") from None
    if response.nonce != nonce:
        raise ResponseInvalid("nonce does not match the outstanding request")
    if not response.verify(provider):
        raise ResponseInvalid("bad provider signature")
    if response.t3 < response.t2 or tau4 < tau1:
        raise ResponseInvalid("inconsistent timestamps")
    return SyncRecord(tau1, response.t2, response.t3, tau4)


def run_synchronization(
    channel: Channel,
    clock: ClockReader,
    provider: Verifier,
    theta_big: int,
    drift_bound: BoundFunction,
    signer: Signer,
    policy: AdjustmentPolicy = AdjustmentPolicy.MIDPOINT,
    nonce: bytes | None = None,
    posture: TimeoutPosture = TimeoutPosture.SHUTDOWN,
    next_required: int | None = None,
    lambda_slack: float = 1.0,
    rng: random.Random | None = None,
    on_request: Callable[[bytes], None] | None = None,
) -> SyncResult:
    """One receiver-side exchange: request, validate, refuse or adjust, certify.

    The returned clock carries the adjustment; the caller's clock is never
    modified on any failure path.
    """
    record = measure_exchange(
        channel, clock, provider, signer, nonce, theta_big, posture,
        next_required, lambda_slack, rng, on_request,
    )
    delta_theta = select_adjustment(record, theta_big, policy)
    adjusted = clock.apply_adjustment(delta_theta, at=record.t3)
    state = CertificationState(record.shifted(delta_theta), drift_bound, record.t3)
    return SyncResult(record, delta_theta, state, safe_until(state, theta_big), adjusted)
