import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmthermo.maps import exo1
from pmthermo.stability import (EXO1_A0, StabilityError, dirac, entry_time, evvn_check,
                                exo1_entry_integral, exo1_geometry, exo1_parameter,
                                exo1_tails, keller_experiment, kappa_vn, measure_distance,
                                parameter_sweep, usc_entropy_check)
from pmthermo.thermo import IntervalMeasure

UNIFORM = IntervalMeasure(1, np.array([1.0]))


def test_distance_examples():
    assert measure_distance(UNIFORM, UNIFORM) == 0.0
    assert measure_distance(dirac(0.0), dirac(1.0)) == pytest.approx(1.0)
    assert measure_distance(UNIFORM, dirac(0.5)) == pytest.approx(0.25)


@given(x=st.floats(0, 1), y=st.floats(0, 1), z=st.floats(0, 1))
def test_distance_metric_on_diracs(x, y, z):
    dx, dy, dz = dirac(x), dirac(y), dirac(z)
    assert measure_distance(dx, dy) == pytest.approx(abs(x - y), abs=1e-12)
    assert measure_distance(dx, dy) == pytest.approx(measure_distance(dy, dx))
    assert measure_distance(dx, dz) <= measure_distance(dx, dy) + measure_distance(dy, dz) + 1e-12


@given(st.lists(st.floats(0, 1), min_size=4, max_size=4), st.floats(0, 1))
def test_distance_histogram_vs_dirac(w, x):
    if sum(w) == 0:
        return
    m = IntervalMeasure(4, np.array(w) / sum(w))
    d = measure_distance(m, dirac(x))
    # W1 to a point mass is the mean distance to that point
    fine = np.linspace(0, 1, 40001)
    mid = 0.5 * (fine[1:] + fine[:-1])
    dens = np.repeat(m.cell_mass * 4, 10000)
    assert d == pytest.approx(np.sum(dens * np.abs(mid - x)) / 40000, abs=1e-6)


def test_entry_time_example():
    assert entry_time(0.5, 10, 0) == 6


def test_entry_time_cap():
    with pytest.raises(StabilityError, match="entry cap"):
        entry_time(0.2500001, 1e6, 0, cap=100)


@given(k=st.floats(0.26, 2.0), M1=st.floats(2, 100), M2=st.floats(2, 100))
def test_entry_time_monotone_in_M(k, M1, M2):
    lo, hi = min(M1, M2), max(M1, M2)
    assert entry_time(k, lo, 0.0) <= entry_time(k, hi, 0.0)


def test_kappa_vn_golden():
    assert kappa_vn(1, 2) == pytest.approx((math.sqrt(5) - 1) / 2, abs=1e-10)


@given(V=st.floats(1.0, 1e4), n=st.integers(1, 12))
def test_kappa_vn_decreasing(V, n):
    k1, k2 = kappa_vn(V, n), kappa_vn(V, n + 1)
    assert 0.25 < k2 < k1


def test_kappa_vn_limit():
    assert kappa_vn(100, 200) - 0.25 < 1e-3


def test_evvn():
    rows = evvn_check()
    assert [r[0] for r in rows] == list(range(3, 9))
    assert all(r[-1] <= 0 for r in rows)


def test_keller_experiment():
    res = keller_experiment([0.4, 0.2, 0.1, 0.05])
    exp = res.extra["lambda_expected"]
    assert all(s.lam == pytest.approx(e, rel=0.01) for s, e in zip(res.stats, exp))
    w1 = res.extra["w1_tip"]
    assert all(b < a for a, b in zip(w1[:-1], w1[1:]))
    assert res.extra["jump"] > 0.2
    assert len(res.distances) == 3


def test_usc_constant_sequence():
    rep = usc_entropy_check("tent", [1.8, 1.8, 1.8], R=8)
    assert rep["margin"] == pytest.approx(0.0, abs=1e-12)
    assert rep["ok"]


def test_usc_keller_flags_relation():
    rep = usc_entropy_check("keller", [0.2, 0.1, 0.0], R=8, tau_max=30)
    assert rep["relation_change"]


def test_exo1_parameter_chain():
    for k in (6, 8):
        a, g = exo1_parameter(k, 5)
        f = exo1(a)
        assert g.alpha < g.q < 0.75 < g.q_star < g.alpha_star
        x = 0.75
        for _ in range(k):
            x = f.value(int(f.branch_of(np.array([x]))[0]) if x != 0.75 else 1, x)
        assert x == pytest.approx(1 / 3 + 2 ** (k - 1) * (a / 16 - 2 / 3), abs=1e-10)
        assert x == pytest.approx(0.75 - g.delta, abs=1e-10)


def test_exo1_parameter_converges_to_a0():
    a = [exo1_parameter(k, 6)[0] for k in (6, 8, 10, 12)]
    gaps = [abs(x - EXO1_A0) for x in a]
    assert all(b < g for g, b in zip(gaps[:-1], gaps[1:]))


def test_exo1_parameter_not_found():
    with pytest.raises(StabilityError, match="parameter not found"):
        exo1_parameter(2, 5)


def test_exo1_geometry_a0():
    g = exo1_geometry(EXO1_A0, 8)
    f = exo1(EXO1_A0)
    assert g.v == pytest.approx(5 / 8)
    assert f.value(1, g.v) == pytest.approx(0.5)
    assert f.value(1, g.alpha) == pytest.approx(g.alpha)
    assert g.alpha_star == pytest.approx(1.5 - g.alpha)
    assert g.delta == pytest.approx(5 / 12)


def test_exo1_entry_integral_grows():
    vals = [exo1_entry_integral(8, n)[0] for n in (20, 40, 80)]
    assert vals[0] < vals[1] < vals[2]


def test_exo1_tails_reference():
    t = exo1_tails(EXO1_A0, 20)
    assert t["ok_E"] and t["ok_R"]
    g = exo1_geometry(EXO1_A0, 8)
    assert t["m_E"][0] == pytest.approx(g.alpha_star - g.alpha)


def test_parameter_sweep_ulam():
    res = parameter_sweep("quadratic", [3.9, 3.95, 4.0], grid_n=512)
    assert len(res) == 3 and len(res.distances) == 2
    assert all(d >= 0 for d in res.distances)
    assert res.stats[-1].lam == pytest.approx(math.log(2), rel=0.02)
