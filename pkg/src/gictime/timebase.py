"""Nanosecond time representation.

Every timestamp, offset and delay inside the package is a plain ``int`` count
of nanoseconds. Seconds appear only at the edges (config files, CSV, CLI).
"""

from __future__ import annotations

from decimal import ROUND_HALF_EVEN, Decimal
from fractions import Fraction
from typing import Union

NS_PER_S = 1_000_000_000

Seconds = Union[int, float, str, Decimal, Fraction]


def to_ns(seconds: Seconds) -> int:
    """Convert a seconds value to integer nanoseconds.

    Floats go through their shortest ``repr`` so that ``0.05`` maps to exactly
    50_000_000 ns rather than to the nearest binary fraction.
    """
    if isinstance(seconds, Fraction):
        value = seconds * NS_PER_S
        return round(value)
    if isinstance(seconds, float):
        seconds = repr(seconds)
    value = Decimal(seconds) * NS_PER_S
    return int(value.to_integral_value(rounding=ROUND_HALF_EVEN))


def to_s(ns: int | Fraction) -> float:
    return float(Fraction(ns) / NS_PER_S)


def format_s(ns: int | None) -> str:
    """Exact fixed-point rendering of a nanosecond count in seconds."""
    if ns is None:
        return ""
    sign = "-" if ns < 0 else ""
    whole, frac = divmod(abs(int(ns)), NS_PER_S)
    return f"{sign}{whole}.{frac:09d}"


def ceil_fraction(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


def as_fraction(value: Seconds) -> Fraction:
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)
