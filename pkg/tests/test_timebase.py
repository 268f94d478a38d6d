from decimal import Decimal
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from gictime.timebase import NS_PER_S, as_fraction, ceil_fraction, format_s, to_ns, to_s


@pytest.mark.parametrize(
    "seconds, ns",
    [
        (0.05, 50_000_000),
        (0.01, 10_000_000),
        (-2, -2 * NS_PER_S),
        ("1.5", 1_500_000_000),
        (Decimal("0.000000001"), 1),
        (Fraction(7, 3), 2_333_333_333),
        (1e-6, 1_000),
    ],
)
def test_to_ns_exact_for_decimal_literals(seconds, ns):
    assert to_ns(seconds) == ns


def test_to_ns_rounds_half_even():
    assert to_ns("0.0000000005") == 0
    assert to_ns("0.0000000015") == 2


@pytest.mark.parametrize(
    "ns, text",
    [(0, "0.000000000"), (1, "0.000000001"), (-1, "-0.000000001"), (-2_500_000_000, "-2.500000000"), (None, "")],
)
def test_format_s(ns, text):
    assert format_s(ns) == text


@given(st.integers(min_value=-(2**62), max_value=2**62))
def test_format_round_trips(ns):
    assert to_ns(format_s(ns)) == ns


def test_ceil_fraction():
    assert ceil_fraction(Fraction(1, 2)) == 1
    assert ceil_fraction(Fraction(-1, 2)) == 0
    assert ceil_fraction(Fraction(4)) == 4


def test_as_fraction_uses_shortest_repr():
    assert as_fraction(0.1) == Fraction(1, 10)
    assert to_s(1_500_000_000) == 1.5
