import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import sparse

from keldysh_lab._kernels import CSR
from keldysh_lab.errors import InvalidDomain, InvalidParameter
from keldysh_lab.geometry import Rectangle
from keldysh_lab.grid import make_grid
from keldysh_lab.operators import kappa_form, loword
from keldysh_lab.solver import (BoundaryData, Manufactured, bilinear_xy, boundary_trace, cgls,
                                closed_dirichlet, dirichlet, max_principle_check, mixed_dn,
                                neumann_y, open_dirichlet, overdeterminacy_experiment,
                                separated_solution, smooth_field, solve_lsq)
from keldysh_lab.typechange import make_power

KX = make_power(1)
SPEC = loword(KX)


def test_recovers_xy_exactly(domain_x):
    xy = bilinear_xy()
    spec = kappa_form(1.25)
    sol = solve_lsq(spec, make_grid(domain_x, 17), open_dirichlet(domain_x, xy.u), xy.rhs(spec))
    exact = sol.u.grid.sample(xy.u, "inside")
    assert sol.converged and (sol.u - exact).max_abs() <= 1e-8


def test_zero_data_is_zero_from_any_start(domain_x):
    g = make_grid(domain_x, 17)
    rng = np.random.default_rng(0)
    nu = int(g.inside.sum())
    sols = [solve_lsq(SPEC, g, open_dirichlet(domain_x), 0.0, x0=rng.standard_normal(nu))
            for _ in range(2)]
    assert all(s.converged for s in sols)
    assert max(s.u.max_abs() for s in sols) <= 1e-6
    assert (sols[0].u - sols[1].u).max_abs() <= 1e-6


def test_zero_characteristic_data_keeps_both_residuals_zero(domain_x):
    zero = Manufactured(*(lambda X, Y: 0 * X,) * 5, "zero")
    rep = overdeterminacy_experiment(SPEC, domain_x, 0.0, grids=(17,), ms=zero)
    row = rep.rows[0]
    assert row["open_residual"] <= 1e-8 and row["closed_residual"] <= 1e-8


def test_consistent_trace_matches_open(domain_x):
    rep = overdeterminacy_experiment(SPEC, domain_x, 1.0, grids=(17,))
    assert rep.rows[0]["consistent_ratio"] == pytest.approx(1.0, abs=1e-3)
    assert rep.rows[0]["ratio"] > 10


def test_boundary_data_must_match_arcs(domain_x):
    with pytest.raises(InvalidParameter):
        solve_lsq(SPEC, make_grid(domain_x, 9), BoundaryData({"L1": dirichlet()}), 0.0)
    bad = BoundaryData({"L1": dirichlet(), "L2": dirichlet(), "L3": dirichlet(),
                        "Gamma1": neumann_y(), "Gamma2": dirichlet()})
    with pytest.raises(InvalidParameter):
        solve_lsq(SPEC, make_grid(domain_x, 9), bad, 0.0)


def test_max_principle_examples():
    rect = Rectangle(0.0, 1.0, -2.0, 2.0)
    g = make_grid(rect, 17)
    y = max_principle_check(g.sample(lambda X, Y: Y, "inside"), 0.0, 0.0)
    assert y["pass"] and y["interior_max"] < y["boundary_max"]
    c = max_principle_check(g.sample(lambda X, Y: 3 + 0 * X, "inside"), 0.0, 0.0)
    assert c["pass"] and c["interior_max"] == c["boundary_max"]
    sol = solve_lsq(SPEC, make_grid(rect, 17), closed_dirichlet(rect, lambda X, Y: X + Y), 0.0)
    assert max_principle_check(sol.u, sol.residual_norm)["pass"]
    with pytest.raises(InvalidDomain):
        max_principle_check(make_grid(Rectangle(-1.0, -0.5, 0, 1), 9).sample(lambda X, Y: X))


def test_mixed_negative_control(domain_x):
    xy = bilinear_xy()
    g = make_grid(domain_x, 17)
    neg = solve_lsq(SPEC, g, mixed_dn(xy.uy, 0.0, xy.uy), xy.rhs(SPEC))
    assert (neg.u - g.sample(xy.u, "inside")).max_abs() > 1e-3


def test_boundary_trace_reproduces_linear_field(domain_x):
    g = make_grid(domain_x, 33)
    u = g.sample(lambda X, Y: 2 * X - Y, "inside")
    v = domain_x.gamma2.vertices[::50]
    ys = g.ys[np.argmin(np.abs(g.ys[:, None] - v[:, 1]), axis=0)]
    xs = domain_x.x_left(ys)
    assert np.allclose(boundary_trace(u, xs, ys), 2 * xs - ys, atol=1e-10)


@given(st.floats(0.25, 1.5), st.floats(0.3, 2.0))
def test_separated_solution_is_exact(kappa, q):
    ms = separated_solution(kappa, q)
    rng = np.random.default_rng(1)
    X, Y = rng.uniform(-1, 1, 50), rng.uniform(-2, 2, 50)
    spec = kappa_form(kappa)
    assert np.max(np.abs(ms.rhs(spec)(X, Y))) <= 1e-10
    h = 1e-5
    fd = (ms.u(X + h, Y) - ms.u(X - h, Y)) / (2 * h)
    assert np.allclose(fd, ms.ux(X, Y), atol=1e-6)


def test_smooth_field_derivatives():
    ms = smooth_field()
    X, Y = np.meshgrid(np.linspace(-1, 1, 5), np.linspace(-1, 1, 5))
    h = 1e-4
    assert np.allclose((ms.u(X, Y + h) - ms.u(X, Y - h)) / (2 * h), ms.uy(X, Y), atol=1e-6)
    assert np.allclose((ms.ux(X + h, Y) - ms.ux(X - h, Y)) / (2 * h), ms.uxx(X, Y), atol=1e-6)


@given(st.integers(0, 2**31 - 1), st.integers(3, 12))
def test_cgls_matches_lstsq(seed, ncols):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((ncols + 5, ncols))
    b = rng.standard_normal(ncols + 5)
    res = cgls(CSR(sparse.csr_matrix(M)), CSR(sparse.csr_matrix(M.T)), b, tol=1e-12)
    ref = np.linalg.lstsq(M, b, rcond=None)[0]
    assert res.converged
    assert np.allclose(res.x, ref, atol=1e-7 * (1 + np.abs(ref).max()))
