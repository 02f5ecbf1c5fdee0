import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from keldysh_lab.bumps import Bump, profile, random_bumps
from keldysh_lab.dual import (distribution_solve, heldout_bumps, lattice_bumps,
                              pairing_asymmetry, _Pairings)
from keldysh_lab.errors import InvalidInput, InvalidParameter
from keldysh_lab.geometry import Rectangle
from keldysh_lab.operators import general, kappa_form
from keldysh_lab.typechange import make_power

BOX = Rectangle(-1.0, 1.0, -1.0, 1.0)


def test_zero_rhs_gives_zero():
    sol = distribution_solve(kappa_form(1.25), 0.0, BOX, 4)
    assert np.linalg.norm(sol.u.values) <= 1e-10


def test_manufactured_pairings_are_met():
    spec = kappa_form(1.25)
    sol = distribution_solve(spec, lambda X, Y: 1.25 * Y, BOX, 8)
    assert sol.training_residual <= 1e-10
    assert sol.pairing_residual <= 1e-2
    assert sol.test_count == 24 and sol.rank <= len(lattice_bumps(BOX, 8))


def test_kappa_range_enforced():
    with pytest.raises(InvalidParameter):
        distribution_solve(kappa_form(0.5), 0.0, BOX, 4)
    with pytest.raises(InvalidParameter):
        distribution_solve(general(make_power(1), 0.5), 0.0, BOX, 4)
    with pytest.raises(InvalidParameter):
        distribution_solve(kappa_form(1.0), 0.0, BOX, 2)


def test_bumps_must_stay_inside():
    with pytest.raises(InvalidInput):
        _Pairings(kappa_form(1.0), BOX, 8, 2, [Bump(0.5, 1.5, 0.0, 0.5)])


def test_lattice_bumps_are_interior():
    for n in (4, 8):
        for b in lattice_bumps(BOX, n):
            assert BOX.xmin <= b.x0 < b.x1 <= BOX.xmax and BOX.ymin <= b.y0 < b.y1 <= BOX.ymax


def test_self_adjoint_asymmetry_is_small():
    held = heldout_bumps(BOX)
    asym = [pairing_asymmetry(_Pairings(general(make_power(2), 1.0), BOX, n, 4, held))
            for n in (16, 32)]
    assert asym[1] <= asym[0] / 3.5


def test_non_self_adjoint_is_asymmetric():
    assert pairing_asymmetry(_Pairings(kappa_form(1.5), BOX, 16, 4, heldout_bumps(BOX))) > 1e-2


@given(st.floats(0.0, 5.0))
def test_profile_is_smooth_partition_piece(t):
    v = profile(np.array([t]))[0]
    assert v >= 0.0
    assert profile(np.array([5.0 - t]))[0] == pytest.approx(v, abs=1e-12)


@given(st.integers(0, 2**31 - 1), st.integers(1, 10))
def test_random_bumps_inside_box(seed, count):
    bs = random_bumps((0.0, 1.0, -1.0, 2.0), count, np.random.default_rng(seed))
    assert len(bs) == count
    assert all(0.0 <= b.x0 < b.x1 <= 1.0 and -1.0 <= b.y0 < b.y1 <= 2.0 for b in bs)


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_bump_derivatives_match_differences(x, y):
    b = Bump(-0.7, 0.8, -0.9, 0.6)
    h = 1e-5
    fd = (b(np.array(x + h), np.array(y)) - b(np.array(x - h), np.array(y))) / (2 * h)
    assert fd == pytest.approx(float(b(np.array(x), np.array(y), dx=1)), abs=1e-6)
