import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from keldysh_lab.errors import InvalidParameter, InvalidStart
from keldysh_lab.geometry import (build_domain, classify_point, domain_from_dict, solve_apex,
                                  trace_characteristic)
from keldysh_lab.typechange import make_power, make_sgn

KX = make_power(1)


def test_trace_reaches_sonic_point():
    ch = trace_characteristic(KX, (-1.0, 0.0), "plus", 3.0, 1e-3)
    assert ch.reached_sonic
    assert np.hypot(*(ch.end - [0.0, 2.0])) <= 1e-6


def test_trace_sgn_is_straight():
    ch = trace_characteristic(make_sgn(), (-1.0, 0.0), "plus", 3.0, 1e-3)
    assert np.allclose(ch.vertices[:, 0] - ch.vertices[:, 1], -1.0)
    assert np.allclose(ch.end, [0.0, 1.0], atol=1e-9)


def test_trace_from_sonic_line_is_degenerate():
    for branch in ("plus", "minus"):
        ch = trace_characteristic(KX, (0.0, 0.0), branch, 1.0, 0.1)
        assert ch.degenerate and np.all(ch.vertices[:, 0] == 0.0)


def test_trace_rejects_elliptic_start():
    with pytest.raises(InvalidStart):
        trace_characteristic(KX, (0.5, 0.0), "plus", 1.0, 0.01)


def test_trace_matches_closed_form():
    ch = trace_characteristic(KX, (-1.0, 0.0), "plus", 1.5, 1e-2)
    y = ch.vertices[:, 1]
    assert np.max(np.abs(ch.vertices[:, 0] + (1 - y / 2) ** 2)) <= 1e-9


def test_apex_examples():
    assert solve_apex(KX, 0.0, 2.0) == pytest.approx(-1.0, abs=1e-6)
    assert solve_apex(KX, -0.25, 1.0) == pytest.approx(-1.0, abs=1e-6)
    assert solve_apex(make_sgn(), 0.0, 1.0) == pytest.approx(-1.0, abs=1e-6)


def test_domain_structure(domain_x):
    dom = domain_x
    assert dom.m == pytest.approx(-1.0, abs=1e-6)
    assert [a.name for a in dom.arcs] == ["L1", "L2", "L3", "Gamma2", "Gamma1"]
    poly = dom.polygon()
    assert np.allclose(poly[0], poly[-1], atol=1e-9)
    x, y = poly[:, 0], poly[:, 1]
    signed = 0.5 * np.sum(x[:-1] * y[1:] - x[1:] * y[:-1])
    assert signed > 0  # counter-clockwise
    assert np.all(KX(dom.gamma1.vertices[:, 0]) <= 1e-12)
    plus = dom.plus_part
    assert (plus.xmin, plus.xmax, plus.ymin, plus.ymax) == (0.0, 1.0, -2.0, 2.0)
    assert np.allclose(dom.gamma1.end, [0.0, -2.0], atol=1e-9)
    assert np.allclose(dom.gamma2.end, [0.0, 2.0], atol=1e-9)


def test_domain_rejects_bad_b():
    with pytest.raises(InvalidParameter):
        build_domain(KX, 0.0, -1.0, 1.0)


def test_classify(domain_x):
    assert classify_point(domain_x, (0.5, 0.0)) == "elliptic"
    assert classify_point(domain_x, (0.0, 0.3)) == "sonic"
    assert classify_point(domain_x, (-0.9, 0.0)) == "hyperbolic"
    assert classify_point(domain_x, (2.0, 0.0)) == "exterior"
    assert classify_point(domain_x, (1.0, 0.0)) == "boundary"


def test_json_round_trip(domain_x):
    doc = json.loads(domain_x.to_json())
    assert set(doc) >= {"a", "b", "d", "m", "arcs"}
    back = domain_from_dict(doc, KX)
    assert back.m == pytest.approx(domain_x.m)


def test_mirror_symmetry(domain_x):
    g1, g2 = domain_x.gamma1.vertices, domain_x.gamma2.vertices
    assert np.allclose(g1[:, 0], g2[:, 0], atol=1e-12)
    assert np.allclose(g1[:, 1], -g2[:, 1], atol=1e-12)


def test_area_matches_closed_form(domain_x):
    assert domain_x.area() == pytest.approx(4 + 4 / 3, rel=1e-9)


@given(st.floats(0.2, 2.0), st.floats(-1.0, 1.0), st.sampled_from(["plus", "minus"]),
       st.integers(1, 2))
def test_step_refinement_is_fourth_order(w, y0, branch, k0):
    K = make_power(k0)
    stop = y0 + 0.5 if branch == "plus" else y0 - 0.5
    ends = [trace_characteristic(K, (-w, y0), branch, stop, s).end for s in (0.02, 0.01, 0.005)]
    e1 = np.hypot(*(ends[0] - ends[2]))
    e2 = np.hypot(*(ends[1] - ends[2]))
    assert e2 <= e1 / 8 + 1e-11


@given(st.floats(0.2, 2.0), st.sampled_from(["plus", "minus"]), st.integers(1, 3))
def test_characteristic_x_is_monotone(w, branch, k0):
    ch = trace_characteristic(make_power(k0), (-w, 0.0), branch,
                              2.0 if branch == "plus" else -2.0, 0.01)
    dx = np.diff(ch.vertices[:, 0])
    assert np.all(dx >= -1e-14) or np.all(dx <= 1e-14)
