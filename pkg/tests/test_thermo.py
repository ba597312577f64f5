import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmthermo.hofbauer import direct_full_branch, induced_pipeline, level_R_induced
from pmthermo.maps import custom_map, quadratic, tent
from pmthermo.thermo import (IntervalMeasure, gibbs_weights, markov_gibbs, markov_pressure,
                             periodic_orbits, periodic_pressure, pressure_curve,
                             solve_pressure, spread, stats, tail_exponent)
from pmthermo.ulam import chebyshev_cell_masses

LOG2 = math.log(2)


def two_affine(c):
    return custom_map([0, 1], [
        {"lo": 0, "hi": c, "kind": "affine", "coeffs": [1 / c, 0]},
        {"lo": c, "hi": 1, "kind": "affine", "coeffs": [-1 / (1 - c), 1 / (1 - c)]}])


@pytest.fixture(scope="module")
def doubling():
    return direct_full_branch(tent(2))


@pytest.fixture(scope="module")
def chebyshev_r8():
    return level_R_induced(quadratic(4), 8, 40)


@pytest.mark.parametrize("t", [-1.0, 0.0, 0.5, 1.0, 2.0])
def test_affine_pressure(doubling, t):
    p, (lo, hi) = solve_pressure(doubling, t)
    assert p == pytest.approx((1 - t) * LOG2, abs=1e-10)
    assert lo <= p <= hi


@given(c=st.floats(0.05, 0.95), t=st.floats(-1.0, 2.0))
def test_unequal_affine_pressure(c, t):
    fb = direct_full_branch(two_affine(c))
    p, _ = solve_pressure(fb, t)
    assert p == pytest.approx(math.log(c ** t + (1 - c) ** t), abs=1e-9)


def test_gibbs_symmetric(doubling):
    w = gibbs_weights(doubling, 0.7)
    assert np.allclose(w.weights, [0.5, 0.5])
    assert np.all(w.lower <= w.weights + 1e-12) and np.all(w.weights <= w.upper + 1e-12)


def test_stats_closed_form(doubling):
    w = gibbs_weights(doubling, 0.5)
    s = stats(doubling, w)
    assert s.T == pytest.approx(1.0)
    assert s.lam == pytest.approx(LOG2)
    assert s.entropy == pytest.approx(LOG2)
    assert s.free_energy == pytest.approx(0.5 * LOG2)
    assert s.entropy_direct == pytest.approx(LOG2)


def test_spread_lebesgue(doubling):
    w = gibbs_weights(doubling, 1.0)
    m, lyap = spread(doubling, w, 1024)
    assert np.max(np.abs(m.cell_mass * 1024 - 1)) <= 0.02
    assert lyap == pytest.approx(LOG2)


def test_markov_chebyshev(chebyshev_r8):
    p, (lo, hi) = markov_pressure(chebyshev_r8, 1.0)
    assert abs(p) <= 2e-3 and lo <= p <= hi
    s = stats(chebyshev_r8, markov_gibbs(chebyshev_r8, 1.0), 1.0)
    assert s.lam == pytest.approx(LOG2, rel=0.02)
    assert s.entropy == pytest.approx(LOG2, rel=0.02)


def test_spread_chebyshev_density(chebyshev_r8):
    m, _ = spread(chebyshev_r8, markov_gibbs(chebyshev_r8, 1.0), 4096)
    assert np.abs(m.cell_mass - chebyshev_cell_masses(4096)).sum() <= 0.05
    assert m.total == pytest.approx(1.0)


def test_markov_topological_pressure():
    ind = level_R_induced(quadratic(4), 4, 40)
    p, _ = markov_pressure(ind, 0.0)
    assert p == pytest.approx(LOG2, abs=1e-3)


def test_periodic_pressure_chebyshev():
    f = quadratic(4)
    e, lmin, lmax = periodic_pressure(f, 1.0, 8)
    assert e == pytest.approx(-LOG2, abs=1e-6)
    assert lmax == pytest.approx(math.log(4), abs=1e-6)
    assert periodic_pressure(f, -1.0, 8)[0] == pytest.approx(math.log(4), abs=1e-6)
    assert periodic_pressure(f, 0.0, 8)[0] == 0.0


def test_periodic_orbit_count():
    # tent(2) has 2^n - ... points of period dividing n; all repelling with lambda log 2
    orbs = periodic_orbits(tent(2), 4)
    assert all(o[2] == pytest.approx(LOG2) for o in orbs)
    assert sum(1 for o in orbs if o[0] == 1) == 2


def test_pressure_curve_tent_two():
    t = np.linspace(0, 1, 5)
    pc = pressure_curve(tent(2), t, R=4, tau_max=40)
    assert np.all(pc.resolved)
    assert np.all(pc.p_lo <= (1 - t) * LOG2 + 1e-9)
    assert np.all((1 - t) * LOG2 <= pc.p_hi + 1e-9)
    assert np.allclose(pc.p_values, (1 - t) * LOG2, atol=1e-6)
    assert pc.convexity_defect() >= -1e-8
    text = pc.to_csv()
    assert text.splitlines()[0].startswith("t,p_lo")
    assert len(text.splitlines()) == 6


def test_pressure_above_periodic_bound():
    t = np.array([0.5, 1.0, 1.5])
    pc = pressure_curve(quadratic(3.9), t, R=8, tau_max=40)
    assert np.all(pc.p_hi >= pc.E_plus_values - 1e-9)


def test_tail_exponent_negative():
    _, ind, fb = induced_pipeline(quadratic(3.9), 2, 24)
    p, _ = markov_pressure(ind, 1.0)
    slope, ns, mass = tail_exponent(fb, gibbs_weights(fb, 1.0, p=p))
    assert slope < 0
    assert mass.sum() == pytest.approx(1.0)


def test_interval_measure():
    m = IntervalMeasure(4, np.array([0.1, 0.2, 0.3, 0.4]), 0.0, 1.0, [(0.5, 0.0)])
    assert m.mass_in(0.0, 0.5) == pytest.approx(0.3)
    assert m.mass_in(0.125, 0.375) == pytest.approx(0.15)
    assert np.allclose(m.density(), [0.4, 0.8, 1.2, 1.6])
    assert m.to_csv().count("\n") >= 5
