import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmthermo.hofbauer import (TowerError, build_extension, counting_n0, direct_full_branch,
                               induced_pipeline, level_R_induced, primitive_components,
                               tower_params)
from pmthermo.maps import exo1, keller, quadratic, tent


def test_tower_params_values():
    p = tower_params(16, 2)
    assert p.epsilon == pytest.approx(1.38629, abs=1e-5)
    assert p.eta == pytest.approx(0.125, abs=1e-5)
    p = tower_params(100, 2)
    assert p.epsilon == pytest.approx(0.36841, abs=1e-5)
    assert p.eta == pytest.approx(0.0014125, rel=1e-4)


def test_tower_params_hypothesis():
    with pytest.raises(ValueError):
        tower_params(15, 2)
    assert not tower_params(15, 2, strict=False).hypothesis_ok


def test_extension_full_branches():
    assert len(build_extension(quadratic(4), 5).domains) == 1


def test_extension_postcritically_finite():
    counts = [len(build_extension(exo1(32 / 3), R).domains) for R in (10, 20, 30)]
    assert counts[0] == counts[1] == counts[2]


def test_extension_count_bound():
    g = build_extension(tent(1.8), 10)
    assert len(g.domains) <= (2 * 2 * 10) ** 2
    assert g.count_ok


def test_extension_exports():
    g = build_extension(quadratic(3.8), 6)
    d = json.loads(g.to_json())
    assert len(d["domains"]) == len(g.domains)
    assert all(0 <= a["src"] < len(g.domains) for a in d["arrows"])
    dot = g.to_dot()
    assert dot.startswith("digraph") and dot.count("->") == len(g.arrows)


def test_domains_nested_levels():
    g = build_extension(quadratic(3.9), 8)
    assert g.domains[0].level == 0
    assert max(D.level for D in g.domains) <= 8
    for D in g.domains:
        assert 0.0 <= D.lo < D.hi <= 1.0


def test_induced_quadratic_four():
    ind = level_R_induced(quadratic(4), 2, 30)
    assert len(ind.components) == 2
    part = primitive_components(ind)
    assert len(part) == 1 and sorted(part.classes[0]) == [0, 1]


def test_induced_branches_inside_components():
    ind = level_R_induced(quadratic(3.9), 8, 30)
    lo = np.array([c[1] for c in ind.components])
    hi = np.array([c[2] for c in ind.components])
    assert np.all(ind.z_lo >= lo[ind.src] - 1e-12)
    assert np.all(ind.z_hi <= hi[ind.src] + 1e-12)
    assert np.all(ind.tau >= 1) and np.all(ind.tau <= 30)
    assert np.all(ind.dlog_min <= ind.dlog_mid + 1e-12)
    assert np.all(ind.dlog_mid <= ind.dlog_max + 1e-12)
    assert all(len(w) == t for w, t in zip(ind.words, ind.tau))


def test_induced_branch_lengths_sum():
    # quadratic(4) is conjugate to a full shift: the returns cover each component
    ind = level_R_induced(quadratic(4), 2, 40)
    covered = np.sum(ind.z_hi - ind.z_lo) + ind.truncated_length
    total = sum(c[2] - c[1] for c in ind.components)
    assert covered == pytest.approx(total, rel=1e-6)


def test_counting_quadratic():
    ind = level_R_induced(quadratic(3.9), 12, 40)
    rep = ind.counting_check()
    assert rep.ok
    assert rep.n0 == counting_n0(12, 2)
    eps = tower_params(12, 2, strict=False).epsilon
    assert all(c <= math.exp(n * eps) for n, c in rep.counts.items() if n >= rep.n0)


def test_keller_restrictive_dynamics():
    ind = level_R_induced(keller(0.2), 4, 30)
    part = primitive_components(ind)
    assert len(part.classes) >= 2 or part.unassigned


def test_full_branch_quadratic_four():
    _, _, fb = induced_pipeline(quadratic(4), 2, 30)
    assert np.all(fb.dlog_min >= math.log(2))
    assert fb.expanding()
    assert np.all(fb.z_lo >= fb.y0[0] - 1e-12) and np.all(fb.z_hi <= fb.y0[1] + 1e-12)


def test_direct_full_branch():
    fb = direct_full_branch(tent(2))
    assert len(fb) == 2
    assert np.allclose(fb.dlog_mid, math.log(2))
    with pytest.raises(TowerError):
        direct_full_branch(tent(1.8))


def test_tau_max_below_R():
    with pytest.raises(ValueError, match="tau_max"):
        level_R_induced(tent(1.2), 40, 10)


@given(R=st.integers(16, 400))
def test_eta_below_epsilon(R):
    p = tower_params(R, 2)
    assert 0 < p.eta < p.epsilon
    assert p.epsilon == pytest.approx(8 * math.log(R) / R)
