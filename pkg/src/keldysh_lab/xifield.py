"""The auxiliary potential xi with grad xi = (-2 u_x u_y, K u_x^2 - u_y^2).

xi itself is never reconstructed; everything here works with its gradient:
path integrals, the sign of d xi along characteristics and its values on the
sonic line.  Along a characteristic dx = s sqrt(-K) dy (s = +1 on the plus
branch), so

    d xi = (g_x dx/dy + g_y) dy = -(sqrt(-K) u_x + s u_y)^2 dy,

and xi can only decrease as y increases.  ``characteristic_decay_check``
compares the two sides numerically.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter, InvalidPath
from .geometry import CharacteristicPath, MixedDomain, Region, trace_characteristic
from .grid import GridField, diff, sample_points
from .report import LadderReport
from .typechange import TypeChangeFn


@dataclass(frozen=True)
class XiGradient:
    gx: GridField
    gy: GridField
    ux: GridField
    uy: GridField
    K: TypeChangeFn


def build_xi_gradient(K: TypeChangeFn, u: GridField) -> XiGradient:
    ux, uy = diff(u, "x"), diff(u, "y")
    Kx = u.grid.field(K(u.grid.mesh[0]))
    return XiGradient(-2.0 * ux * uy, Kx * ux * ux - uy * uy, ux, uy, K)


def _sample(fld: GridField, pts: np.ndarray) -> np.ndarray:
    vals, ok = sample_points(fld, pts)
    if not ok.all():
        bad = pts[~ok][0]
        raise InvalidPath(f"path leaves the valid part of the grid near ({bad[0]:.4g}, {bad[1]:.4g})")
    return vals


def integrate_xi(grad: XiGradient, path) -> float:
    """Trapezoid rule for the integral of g_x dx + g_y dy along a polyline."""
    pts = np.atleast_2d(np.asarray(path, dtype=float))
    if pts.shape[0] < 2 or not np.any(np.diff(pts, axis=0)):
        return 0.0
    region: Region = grad.gx.grid.region
    if not np.all(region.contains(pts[:, 0], pts[:, 1], tol=1e-9)):
        raise InvalidPath("path leaves the region")
    gx, gy = _sample(grad.gx, pts), _sample(grad.gy, pts)
    d = np.diff(pts, axis=0)
    return float(np.sum(0.5 * (gx[1:] + gx[:-1]) * d[:, 0] + 0.5 * (gy[1:] + gy[:-1]) * d[:, 1]))


def characteristic_decay_check(grad: XiGradient, ch: CharacteristicPath) -> dict:
    """d xi / dy on every path segment, by the chord (form i) and by the square (form ii)."""
    v = ch.vertices
    dy = np.diff(v[:, 1])
    keep = np.abs(dy) > 1e-14
    dx = np.diff(v[:, 0])[keep]
    dy = dy[keep]
    s0, s1 = ch.slopes[:-1][keep], ch.slopes[1:][keep]
    ymid = 0.5 * (v[:-1, 1] + v[1:, 1])[keep]
    # cubic Hermite midpoint of x(y), fourth-order accurate on a smooth path
    xmid = 0.5 * (v[:-1, 0] + v[1:, 0])[keep] + dy * (s0 - s1) / 8.0
    pts = np.column_stack([xmid, ymid])
    if pts.size == 0:
        return {"max_violation": 0.0, "max_discrepancy": 0.0, "y": [], "form_i": [],
                "form_ii": []}
    gx, gy = _sample(grad.gx, pts), _sample(grad.gy, pts)
    ux, uy = _sample(grad.ux, pts), _sample(grad.uy, pts)
    sign = 1.0 if ch.branch == "plus" else -1.0
    root = np.sqrt(np.maximum(-np.asarray(grad.K(xmid), dtype=float), 0.0))
    form_i = gx * dx / dy + gy
    form_ii = -(root * ux + sign * uy) ** 2
    return {"max_violation": float(max(form_i.max(), 0.0)),
            "max_discrepancy": float(np.max(np.abs(form_i - form_ii))),
            "y": ymid, "form_i": form_i, "form_ii": form_ii}


def sonic_line_report(grad: XiGradient, u: GridField) -> dict:
    """u_y and xi_y along x = 0."""
    grid = u.grid
    if grid.i_zero is None:
        raise InvalidParameter("x = 0 is not a grid line")
    col = grad.uy.valid[grid.i_zero] & grad.gy.valid[grid.i_zero] & grid.inside[grid.i_zero]
    uy = grad.uy.values[grid.i_zero, col]
    xiy = grad.gy.values[grid.i_zero, col]
    return {"y": grid.ys[col], "uy_on_sonic": uy, "xiy_on_sonic": xiy,
            "max_uy": float(np.max(np.abs(uy))) if uy.size else 0.0,
            "max_xiy": float(np.max(np.abs(xiy))) if xiy.size else 0.0}


def characteristic_pair_check(dom: MixedDomain, count: int = 32, seed: int = 42,
                              step: float | None = None) -> dict:
    """Spot check that every sampled hyperbolic point lies on a characteristic
    whose foot on y = 0 is to the right of the apex, and that the other
    characteristic from that foot stays in the domain.

    For y > 0 the plus branch is followed down to y = 0; y < 0 mirrors it.
    """
    rng = np.random.default_rng(seed)
    step = step or dom.b / 400.0
    feet, failures = [], 0
    drawn = 0
    while drawn < count:
        x = rng.uniform(dom.m, 0.0)
        y = rng.uniform(-dom.b, dom.b)
        if x >= -1e-6 or abs(y) < 1e-6 or not dom.contains(x, y):
            continue
        drawn += 1
        up = y > 0.0
        ch = trace_characteristic(dom.K, (x, y), "plus" if up else "minus", 0.0, step)
        foot = ch.end
        ok = abs(foot[1]) <= 1e-9 and dom.m - 1e-6 < foot[0] < 0.0
        if ok:
            partner = trace_characteristic(dom.K, foot, "minus" if up else "plus",
                                           -dom.b if up else dom.b, step)
            ok = bool(np.all(dom.contains(partner.vertices[:, 0], partner.vertices[:, 1],
                                          tol=1e-6)))
        failures += not ok
        feet.append(float(foot[0]))
    return {"samples": count, "failures": failures, "feet": feet, "pass": failures == 0}


TEST_FIELDS = {
    "sin(x+y/2)": lambda X, Y: np.sin(X + 0.5 * Y),
    "exp(0.3x)cos(y)": lambda X, Y: np.exp(0.3 * X) * np.cos(Y),
    "xy+0.2y^3": lambda X, Y: X * Y + 0.2 * Y**3,
}


def decay_experiment(spec, dom: MixedDomain, grids=(33, 65, 129), solve_grids=(17, 33, 65)
                     ) -> LadderReport:
    """Form agreement along both characteristic arcs for analytic fields, then
    the sign of d xi / dy and the sonic-line values for least-squares solutions.

    The homogeneous open solution is represented by u_h - u*, the error of
    the open solve with data from an exact solution u*; see ``open_experiment``.
    """
    from .grid import make_grid
    from .solver import _error, default_solution, open_dirichlet, solve_lsq

    rep = LadderReport("xi", info={"fields": list(TEST_FIELDS)})
    for n in grids:
        grid = make_grid(dom, n, pad=3)
        row = {"n": n, "h": grid.h}
        for name, f in TEST_FIELDS.items():
            grad = build_xi_gradient(dom.K, grid.sample(f))
            row[name] = max(characteristic_decay_check(grad, arc)["max_discrepancy"]
                            for arc in (dom.gamma1, dom.gamma2))
        rep.rows.append(row)
    h = rep.column("h")
    worst = np.max([rep.column(k) / h**2 for k in TEST_FIELDS], axis=0)
    rep.info["C_fit"] = float(worst[0])
    rep.checks["forms_agree_h2"] = bool(np.all(worst <= worst[0] * 1.1))

    ms = default_solution(spec)
    sol_rows = []
    for n in solve_grids:
        grid = make_grid(dom, n)
        sol = solve_lsq(spec, grid, open_dirichlet(dom, ms.u), ms.rhs(spec))
        hom = sol.u - grid.sample(ms.u, "inside")
        viol, sonic = {}, {}
        for label, fld in (("homogeneous", hom), ("solution", sol.u)):
            grad = build_xi_gradient(dom.K, fld)
            viol[label] = max(characteristic_decay_check(grad, arc)["max_violation"]
                              for arc in (dom.gamma1, dom.gamma2))
            sonic[label] = sonic_line_report(grad, fld)["max_uy"]
        sol_rows.append({"n": n, "h": grid.h, "violation_homogeneous": viol["homogeneous"],
                         "violation_solution": viol["solution"],
                         "sonic_uy_homogeneous": sonic["homogeneous"],
                         "sup_error": _error(sol, ms)})
    rep.info["solves"] = sol_rows
    rep.checks["monotone_within_5h"] = all(
        r["violation_homogeneous"] <= 5 * r["h"] and r["violation_solution"] <= 5 * r["h"]
        for r in sol_rows)
    uy = [r["sonic_uy_homogeneous"] for r in sol_rows]
    rep.checks["sonic_uy_decreasing"] = all(b < a for a, b in zip(uy[:-1], uy[1:]))
    rep.info["pairs"] = characteristic_pair_check(dom)
    rep.checks["pairs_found"] = rep.info["pairs"]["pass"]
    return rep
