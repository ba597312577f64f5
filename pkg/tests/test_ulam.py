import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmthermo.maps import quadratic, tent
from pmthermo.ulam import UlamError, chebyshev_cell_masses, ulam_acip, ulam_matrix


def test_tent_two_uniform():
    r = ulam_acip(tent(2), 1024)
    assert r.converged
    assert np.max(np.abs(r.density.cell_mass - 1 / 1024)) <= 1e-6
    assert r.lam == pytest.approx(math.log(2))


def test_chebyshev_density():
    r = ulam_acip(quadratic(4), 4096)
    assert np.abs(r.density.cell_mass - chebyshev_cell_masses(4096)).sum() <= 0.05
    assert r.lam == pytest.approx(math.log(2), rel=0.01)


def test_tent_lyapunov():
    assert ulam_acip(tent(1.7), 2048).lam == pytest.approx(math.log(1.7), rel=0.01)


def test_chebyshev_masses_sum():
    assert chebyshev_cell_masses(64).sum() == pytest.approx(1.0)


def test_small_grid_rejected():
    with pytest.raises(UlamError):
        ulam_acip(tent(2), 16)


@given(s=st.floats(1.2, 2.0), n=st.sampled_from([64, 128, 256]))
def test_rows_stochastic_for_self_maps(s, n):
    M = ulam_matrix(tent(s), n)
    rows = np.asarray(M.sum(axis=1)).ravel()
    assert np.allclose(rows, 1.0, atol=1e-12)
    assert M.min() >= 0


@given(a=st.floats(3.7, 4.0))
def test_density_is_probability(a):
    r = ulam_acip(quadratic(a), 256, iters=2000)
    assert r.density.total == pytest.approx(1.0)
    assert np.all(r.density.cell_mass >= 0)
