import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmthermo.maps import exo1, normalized_quadratic, quadratic, tent
from pmthermo.symbolic import (SymbolicError, cylinders, decode, encode,
                               find_tent_parameter, golden_slope, itinerary, kneading,
                               kneading_order, topological_entropy)

GOLDEN = (1 + math.sqrt(5)) / 2


def test_tent_two_cylinders():
    cs = cylinders(tent(2), 2)
    assert len(cs) == 4
    assert np.allclose(cs.lo, [0, 0.25, 0.5, 0.75])
    assert np.allclose(cs.hi, [0.25, 0.5, 0.75, 1])


def test_quadratic_level_one():
    cs = cylinders(quadratic(4), 1)
    assert np.allclose(np.c_[cs.lo, cs.hi], [[0, 0.5], [0.5, 1]])


def test_cylinder_growth_tent():
    counts = [len(cylinders(tent(1.5), n)) for n in (10, 16)]
    rate = (counts[1] / counts[0]) ** (1 / 6)
    assert rate == pytest.approx(1.5, rel=0.05)


def test_cylinders_partition_interval():
    cs = cylinders(exo1(10), 6)
    assert cs.total_length + cs.dropped_length == pytest.approx(1.0, abs=1e-9)
    assert np.all(cs.lo[1:] >= cs.hi[:-1] - 1e-12)


def test_itineraries():
    assert itinerary(tent(2), 0.3, 5) == "LRRLR"
    assert itinerary(tent(2), 0.4, 6) == "LRLRLR"
    assert itinerary(quadratic(4), 0.5, 3) == "C"


def test_itinerary_escape():
    with pytest.raises(SymbolicError, match="escaped"):
        itinerary(normalized_quadratic(2.0), 3.9, 5)


def test_kneading_examples():
    assert kneading(2.0, 4).word == "RLLL"
    assert kneading(GOLDEN, 3).word == "RLC"
    # s just above 1: the critical value sits near the fixed point 1/2
    assert kneading(1.01, 6).word == "RLRRRL"


def test_kneading_order_rules():
    assert kneading_order("RLC", "RLLL") == -1
    assert kneading_order("RLLL", "RLC") == 1
    assert kneading_order("RLR", "RLR") == 0
    assert kneading_order("LRR", "RLL") == -1
    assert kneading_order("RLR", "RLRLL") == 0


def test_find_tent_golden():
    assert find_tent_parameter(prefix="RLC") == pytest.approx(GOLDEN, abs=1e-9)
    assert golden_slope() == pytest.approx(GOLDEN)


def test_find_tent_round_trip():
    target = kneading(1.9, 30).word
    s = find_tent_parameter(prefix=target, bracket=(1.5, 2.0))
    assert s == pytest.approx(1.9, abs=1e-6)


def test_find_tent_period_two_not_found():
    with pytest.raises(SymbolicError, match="not found"):
        find_tent_parameter(period=2)


def test_find_tent_bad_bracket():
    with pytest.raises(SymbolicError, match="bracket"):
        find_tent_parameter(prefix="RLC", bracket=(1.7, 2.0))


@pytest.mark.parametrize("s", [1.3, 1.5, 1.7, 1.9, 2.0])
def test_entropy_tent(s):
    assert topological_entropy(tent(s), 16).value == pytest.approx(math.log(s), rel=0.02)


def test_entropy_quadratic_four():
    assert topological_entropy(quadratic(4), 14).value == pytest.approx(math.log(2), rel=0.02)


@given(st.lists(st.integers(0, 2), min_size=1, max_size=12))
def test_encode_decode(ids):
    assert decode(encode(ids, 3), 3) == ids


@given(s1=st.floats(1.05, 2.0), s2=st.floats(1.05, 2.0))
def test_kneading_monotone(s1, s2):
    if s1 == s2:
        return
    lo, hi = min(s1, s2), max(s1, s2)
    assert kneading_order(kneading(lo, 40).word, kneading(hi, 40).word) <= 0


@given(s=st.floats(1.05, 2.0))
def test_kneading_is_critical_itinerary(s):
    assert kneading(s, 12).word == itinerary(tent(s), s / 2, 12)
