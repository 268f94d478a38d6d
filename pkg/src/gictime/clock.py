"""GNSS-independent clock (GIC) model.

The simulator owns a :class:`GicClock` and knows its true offset.  Receiver
logic is only ever handed something satisfying :class:`ClockReader`, so it can
read the clock and adjust it but never look at the offset directly.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, Protocol

from .timebase import Seconds, as_fraction, ceil_fraction, to_ns


class ClockReader(Protocol):
    def measure(self, t: int) -> int: ...

    def apply_adjustment(self, delta_theta: int, at: int | None = None) -> "ClockReader": ...


@dataclass(frozen=True)
class GicClock:
    """Receiver clock with a hidden offset.

    ``theta`` is receiver time minus provider time in ns (positive = leading).
    """

    theta: int = 0
    last_sync_time: int | None = None
    adjustment_log: tuple[tuple[int | None, int], ...] = ()

    def measure(self, t: int) -> int:
        return t + self.theta

    def apply_adjustment(self, delta_theta: int, at: int | None = None) -> GicClock:
        """Subtract ``delta_theta`` from all future output."""
        return replace(
            self,
            theta=self.theta - delta_theta,
            last_sync_time=at if at is not None else self.last_sync_time,
            adjustment_log=self.adjustment_log + ((at, delta_theta),),
        )


def measure(clock: GicClock, t: int) -> int:
    return clock.measure(t)


def apply_adjustment(clock: GicClock, delta_theta: int, at: int | None = None) -> GicClock:
    return clock.apply_adjustment(delta_theta, at)


class BoundFunction(Protocol):
    def __call__(self, dt: int) -> Fraction: ...


@dataclass(frozen=True)
class DriftBound:
    """``B(dt) = floor + rate * dt`` on elapsed provider nanoseconds.

    ``rate`` is dimensionless (seconds of offset growth per second).  A zero
    floor gives the linear family, a positive floor the affine one.
    """

    rate: Fraction = Fraction(0)
    floor: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rate", as_fraction(self.rate))
        if self.rate < 0:
            raise ValueError("drift rate must be non-negative")
        if self.floor < 0:
            raise ValueError("drift floor must be non-negative")

    @classmethod
    def linear(cls, rate: Seconds) -> DriftBound:
        return cls(rate=as_fraction(rate))

    @classmethod
    def affine(cls, floor_s: Seconds, rate: Seconds) -> DriftBound:
        floor = to_ns(floor_s)
        if floor <= 0:
            raise ValueError("affine drift bound needs a positive floor")
        return cls(rate=as_fraction(rate), floor=floor)

    @classmethod
    def zero(cls) -> DriftBound:
        return cls()

    def __call__(self, dt: int) -> Fraction:
        if dt < 0:
            raise ValueError("elapsed time must be non-negative")
        return self.floor + self.rate * dt

    def crossing(self, level: Fraction | int) -> Fraction | None:
        """Smallest elapsed time at which ``B`` reaches ``level``.

        Returns ``None`` when the bound never gets there (zero rate).
        """
        level = Fraction(level)
        if level <= self.floor:
            return Fraction(0)
        if self.rate == 0:
            return None
        return (level - self.floor) / self.rate


@dataclass(frozen=True)
class CallableBound:
    """Arbitrary monotone bound; next-sync solving falls back to bisection."""

    func: Callable[[int], Fraction | float | int]
    name: str = "custom"

    def __call__(self, dt: int) -> Fraction:
        if dt < 0:
            raise ValueError("elapsed time must be non-negative")
        value = self.func(dt)
        return value if isinstance(value, Fraction) else as_fraction(value)


class DriftPolicy(enum.Enum):
    LAGGING = "lagging"
    LEADING = "leading"
    UNIFORM = "uniform"


def _strict_magnitude(limit: Fraction, scale: Fraction) -> int:
    # largest integer step that stays strictly inside the bound
    mag = math.floor(limit * scale)
    if mag >= limit:
        mag = ceil_fraction(limit) - 1
    return max(mag, 0)


def drift_evolve(
    clock: GicClock,
    dt: int,
    bound: BoundFunction,
    policy: DriftPolicy = DriftPolicy.UNIFORM,
    rng: random.Random | None = None,
    margin: Seconds = 0,
) -> GicClock:
    """Advance the true offset over ``dt`` ns while respecting ``|change| < B(dt)``.

    With a degenerate bound ``B(dt) == 0`` the offset is left untouched.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    limit = bound(dt)
    if limit <= 0:
        return clock
    if policy is DriftPolicy.UNIFORM:
        rng = rng or random.Random()
        hi = ceil_fraction(limit) - 1
        step = rng.randint(-hi, hi)
    else:
        step = _strict_magnitude(limit, 1 - as_fraction(margin))
        if policy is DriftPolicy.LAGGING:
            step = -step
    return replace(clock, theta=clock.theta + step)


__all__ = [
    "BoundFunction",
    "CallableBound",
    "ClockReader",
    "DriftBound",
    "DriftPolicy",
    "GicClock",
    "apply_adjustment",
    "drift_evolve",
    "measure",
]
