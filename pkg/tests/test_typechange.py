import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from keldysh_lab.errors import InvalidParameter
from keldysh_lab.typechange import (Regularity, from_callables, from_spec, make_power,
                                    make_sgn, parse_tag, validate)


def test_power_one_is_identity():
    K = make_power(1)
    x = np.linspace(-2, 2, 9)
    assert np.array_equal(K(x), x)
    assert np.all(K.deriv1(x) == 1.0)
    assert np.all(K.deriv2(x) == 0.0)
    assert K(np.array([0.0]))[0] == 0.0


def test_power_two_is_cube():
    K = make_power(2)
    assert K(np.array([-0.5]))[0] == pytest.approx(-0.125)
    assert K.deriv1(np.array([-0.5]))[0] == pytest.approx(0.75)


def test_make_power_rejects_nonpositive():
    with pytest.raises(InvalidParameter):
        make_power(0)


def test_sgn_values_and_marker():
    K = make_sgn()
    assert list(K(np.array([2.0, 0.0, -3.0]))) == [1.0, 0.0, -1.0]
    assert np.isnan(K.deriv1(np.array([0.0]))[0])
    assert K.deriv1_halfline(np.array([0.0]))[0] == 0.0
    assert K.regularity is Regularity.PIECEWISE_CONSTANT and not K.is_c1


def test_validate_examples():
    assert validate(make_power(1), -1, 1, 101).admissible
    sq = from_callables(lambda x: x * x, lambda x: 2 * x, lambda x: 2 + 0 * x, name="x^2")
    rep = validate(sq, -1, 1, 101)
    assert not rep.admissible
    assert all(v.x < 0 for v in rep.violations if v.condition == "cond2")
    sg = validate(make_sgn(), -1, 1, 101)
    assert sg.admissible and sg.flags


def test_validate_rejects_bad_interval():
    with pytest.raises(InvalidParameter):
        validate(make_power(1), 0.0, 1.0, 11)


def test_tags_and_spec():
    assert parse_tag("power:2").name == make_power(2).name
    assert parse_tag("sgn").name == make_sgn().name
    assert from_spec("power", 1).name == "x"
    with pytest.raises(InvalidParameter):
        parse_tag("power:abc")


@given(st.integers(1, 4), st.floats(0.05, 2.0), st.booleans())
def test_sign_condition(k0, x, neg):
    K = make_power(k0)
    x = -x if neg else x
    assert x * float(K(np.array([x]))[0]) > 0


@given(st.integers(1, 4), st.floats(0.1, 1.5), st.booleans())
def test_derivative_matches_central_difference(k0, x, neg):
    K = make_power(k0)
    x = -x if neg else x
    errs = []
    for h in (1e-2, 5e-3):
        fd = (K(np.array([x + h]))[0] - K(np.array([x - h]))[0]) / (2 * h)
        errs.append(abs(fd - K.deriv1(np.array([x]))[0]))
    # second order: halving h divides the error by about 4 (or it is at roundoff)
    assert errs[1] <= 0.3 * errs[0] + 1e-10
