"""Mixed elliptic-hyperbolic domain bounded by three segments and two characteristics.

Characteristics satisfy dx = +/- sqrt(-K(x)) dy.  They are integrated as the
augmented system

    x' = s v,    v' = -s K'(x) / 2,     s = +1 (plus) or -1 (minus),

with v = sqrt(-K(x)) carried as an unknown.  The system stays smooth where
the radicand vanishes, so arrival at the sonic line x = 0 is a simple root of v.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .errors import InvalidDomain, InvalidParameter, InvalidStart, NoApex, StepFailure
from .typechange import TypeChangeFn

SONIC_TOL = 1e-9
ARC_ORDER = ("L1", "L2", "L3", "Gamma2", "Gamma1")
ORIENTATION = {
    "L1": "left-to-right",
    "L2": "upward",
    "L3": "right-to-left",
    "Gamma2": "descending",
    "Gamma1": "descending",
}


@dataclass(frozen=True)
class CharacteristicPath:
    branch: str
    vertices: np.ndarray
    step: float
    slopes: np.ndarray
    reached_sonic: bool = False
    degenerate: bool = False

    @property
    def end(self) -> np.ndarray:
        return self.vertices[-1]


@dataclass(frozen=True)
class Arc:
    name: str
    vertices: np.ndarray
    orientation: str


def _rk4(xv: np.ndarray, dy: float, s: float, dK) -> np.ndarray:
    def f(z):
        return np.array([s * z[1], -0.5 * s * dK(z[0])])

    k1 = f(xv)
    k2 = f(xv + 0.5 * dy * k1)
    k3 = f(xv + 0.5 * dy * k2)
    k4 = f(xv + dy * k3)
    return xv + dy / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def trace_characteristic(K: TypeChangeFn, start, branch: str, y_stop: float,
                         step: float, sonic_tol: float = SONIC_TOL) -> CharacteristicPath:
    """Integrate a characteristic from ``start`` toward ``y_stop`` with fixed-step RK4.

    The path halts early when it reaches the sonic line.  A start on the
    sonic line gives the degenerate vertical path x = 0 (flagged).
    """
    if branch not in ("plus", "minus"):
        raise InvalidParameter(f"branch must be 'plus' or 'minus', got {branch!r}")
    if not step > 0:
        raise InvalidParameter("step must be positive")
    x0, y0 = float(start[0]), float(start[1])
    k_start = float(K(np.array([x0]))[0])
    if k_start > sonic_tol:
        raise InvalidStart(f"start ({x0}, {y0}) lies in the elliptic region, K={k_start:g}")
    s = 1.0 if branch == "plus" else -1.0
    direction = 1.0 if y_stop >= y0 else -1.0

    if abs(x0) <= sonic_tol:
        n = max(1, int(math.ceil(abs(y_stop - y0) / step)))
        ys = np.linspace(y0, y_stop, n + 1)
        verts = np.column_stack([np.zeros_like(ys), ys])
        return CharacteristicPath(branch, verts, step, np.zeros_like(ys), False, True)

    def dK(x):
        return float(K.deriv1_halfline(np.array([x]))[0])

    state = np.array([x0, math.sqrt(max(-k_start, 0.0))])
    y = y0
    xs, ys, vs = [x0], [y0], [state[1]]
    reached = False
    while direction * (y_stop - y) > 1e-14 * max(1.0, abs(y_stop)):
        h = min(step, abs(y_stop - y)) * direction
        new = _rk4(state, h, s, dK)
        if new[1] < 0.0 or new[0] > 0.0:
            # v or x changes sign inside the step: locate the sonic arrival
            lo, hi = 0.0, h
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                trial = _rk4(state, mid, s, dK)
                if trial[1] >= 0.0 and trial[0] <= 0.0:
                    lo = mid
                else:
                    hi = mid
                if abs(hi - lo) <= 1e-16 * max(1.0, abs(y)):
                    break
            new = _rk4(state, lo, s, dK)
            new[1] = max(new[1], 0.0)
            h = lo
            reached = True
        k_new = float(K(np.array([new[0]]))[0])
        if k_new > sonic_tol and not reached:
            raise StepFailure(f"negative radicand at y={y + h:.6g}; refine the step")
        y = y + h
        if reached and abs(new[0]) <= max(sonic_tol, 1e-6 * step):
            new[0] = 0.0
        if abs(h) > 1e-15:
            xs.append(new[0])
            ys.append(y)
            vs.append(new[1])
        else:
            xs[-1], vs[-1] = new[0], new[1]
        state = new
        if reached:
            break
    verts = np.column_stack([xs, ys])
    slopes = s * np.asarray(vs)
    return CharacteristicPath(branch, verts, step, slopes, reached, False)


def _default_step(b: float) -> float:
    return min(0.01, b / 200.0)


def solve_apex(K: TypeChangeFn, a: float, b: float, step: float | None = None,
               xtol: float = 1e-13) -> float:
    """Find m < a such that the characteristic from (m, 0) reaches (a, -b)."""
    if a > 0 or b <= 0:
        raise InvalidParameter("solve_apex needs a <= 0 and b > 0")
    step = step or _default_step(b)

    def miss(m):
        ch = trace_characteristic(K, (m, 0.0), "minus", -b, step)
        xe, ye = ch.end
        if ch.degenerate:
            return (0.0 - a) + b
        if ch.reached_sonic:
            return (0.0 - a) + (b - abs(ye))
        return xe - a

    lo = a - 4.0 * (b * b + 1.0)
    hi = a - 1e-6 * (1.0 + abs(a))
    try:
        f_hi = miss(hi)
        f_lo = miss(lo)
    except (InvalidStart, StepFailure) as exc:
        raise NoApex(str(exc)) from exc
    if not (f_lo < 0.0 < f_hi):
        raise NoApex(f"no apex in [{lo:g}, {hi:g}) for a={a}, b={b}")
    return brentq(miss, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)


class Region:
    """Common interface of the integration regions used by the grid.

    A region is {(x, y): ymin <= y <= ymax, x_left(y) <= x <= xmax}.
    """

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    y_kinks: tuple[float, ...] = ()

    def x_left(self, y):
        raise NotImplementedError

    def x_left_slope(self, y):
        raise NotImplementedError

    arcs: list[Arc]

    def polygon(self) -> np.ndarray:
        pts = [self.arcs[0].vertices[0]]
        for arc in self.arcs:
            pts.extend(arc.vertices[1:])
        return np.asarray(pts)

    def contains(self, x, y, tol: float = 0.0):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside_y = (y >= self.ymin - tol) & (y <= self.ymax + tol)
        yc = np.clip(y, self.ymin, self.ymax)
        return inside_y & (x >= self.x_left(yc) - tol) & (x <= self.xmax + tol)

    def area(self) -> float:
        """Exact-to-spline area, used for consistency checks."""
        from scipy.integrate import quad

        pieces = (self.ymin,) + tuple(self.y_kinks) + (self.ymax,)
        total = 0.0
        for lo, hi in zip(pieces[:-1], pieces[1:]):
            total += quad(lambda t: self.xmax - float(self.x_left(t)), lo, hi,
                          epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        return total


@dataclass(frozen=True, eq=False)
class Rectangle(Region):
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise InvalidDomain(f"degenerate rectangle {self}")

    def x_left(self, y):
        return np.full_like(np.asarray(y, dtype=float), self.xmin)

    def x_left_slope(self, y):
        return np.zeros_like(np.asarray(y, dtype=float))

    @property
    def arcs(self) -> list[Arc]:
        x0, x1, y0, y1 = self.xmin, self.xmax, self.ymin, self.ymax
        return [
            Arc("bottom", np.array([[x0, y0], [x1, y0]]), "left-to-right"),
            Arc("right", np.array([[x1, y0], [x1, y1]]), "upward"),
            Arc("top", np.array([[x1, y1], [x0, y1]]), "right-to-left"),
            Arc("left", np.array([[x0, y1], [x0, y0]]), "downward"),
        ]

    def to_dict(self) -> dict:
        return {"kind": "rectangle", "xmin": self.xmin, "xmax": self.xmax,
                "ymin": self.ymin, "ymax": self.ymax}


@dataclass(frozen=True, eq=False)
class MixedDomain(Region):
    """Region bounded by L1, L2, L3 and the characteristics Gamma1, Gamma2."""

    a: float
    b: float
    d: float
    m: float
    K: TypeChangeFn
    gamma1: CharacteristicPath
    gamma2: CharacteristicPath
    arcs: list[Arc] = field(default_factory=list)

    def __post_init__(self):
        lower = self.gamma1.vertices[::-1]
        upper = self.gamma2.vertices
        object.__setattr__(self, "_lower", CubicHermiteSpline(
            lower[:, 1], lower[:, 0], self.gamma1.slopes[::-1]))
        object.__setattr__(self, "_upper", CubicHermiteSpline(
            upper[:, 1], upper[:, 0], self.gamma2.slopes))

    xmin = property(lambda self: self.m)
    xmax = property(lambda self: self.d)
    ymin = property(lambda self: -self.b)
    ymax = property(lambda self: self.b)
    y_kinks = property(lambda self: (0.0,))

    def x_left(self, y):
        y = np.asarray(y, dtype=float)
        yc = np.clip(y, -self.b, self.b)
        out = np.where(yc <= 0.0, self._lower(np.minimum(yc, 0.0)),
                       self._upper(np.maximum(yc, 0.0)))
        return np.minimum(out, 0.0) if self.a == 0.0 else out

    def x_left_slope(self, y):
        """dx/dy along the characteristic boundary, -sqrt(-K) below the axis."""
        x = self.x_left(y)
        v = np.sqrt(np.maximum(-np.asarray(self.K(x), dtype=float), 0.0))
        return np.where(np.asarray(y) < 0.0, -v, v)

    @property
    def plus_part(self) -> Rectangle:
        return Rectangle(0.0, self.d, -self.b, self.b)

    def to_dict(self) -> dict:
        return {
            "a": self.a, "b": self.b, "d": self.d, "m": self.m,
            "K": self.K.name,
            "arcs": [{"name": arc.name, "orientation": arc.orientation,
                      "vertices": arc.vertices.tolist()} for arc in self.arcs],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def build_domain(K: TypeChangeFn, a: float, b: float, d: float,
                 step: float | None = None) -> MixedDomain:
    """Assemble the domain with counter-clockwise arcs L1, L2, L3, Gamma2, Gamma1."""
    if not (a <= 0.0 < d) or not b > 0.0:
        raise InvalidParameter(f"need a <= 0 < d and b > 0, got a={a}, b={b}, d={d}")
    step = step or _default_step(b)
    m = solve_apex(K, a, b, step)
    g1 = trace_characteristic(K, (m, 0.0), "minus", -b, step)
    g2 = trace_characteristic(K, (m, 0.0), "plus", b, step)
    g1 = _snap_end(g1, a, -b, step)
    g2 = _snap_end(g2, a, b, step)
    arcs = [
        Arc("L1", np.array([[a, -b], [d, -b]]), ORIENTATION["L1"]),
        Arc("L2", np.array([[d, -b], [d, b]]), ORIENTATION["L2"]),
        Arc("L3", np.array([[d, b], [a, b]]), ORIENTATION["L3"]),
        Arc("Gamma2", g2.vertices[::-1].copy(), ORIENTATION["Gamma2"]),
        Arc("Gamma1", g1.vertices.copy(), ORIENTATION["Gamma1"]),
    ]
    return MixedDomain(a, b, d, m, K, g1, g2, arcs)


def _snap_end(ch: CharacteristicPath, a: float, y_end: float, step: float) -> CharacteristicPath:
    verts = ch.vertices.copy()
    slopes = ch.slopes.copy()
    gap = np.hypot(verts[-1, 0] - a, verts[-1, 1] - y_end)
    if gap > max(1e-6, 10 * step**2):
        raise NoApex(f"characteristic misses ({a}, {y_end}) by {gap:.3g}")
    if abs(verts[-1, 1] - y_end) > 1e-12:
        # halted on the sonic line a hair before y_end
        verts = np.vstack([verts, [a, y_end]])
        slopes = np.append(slopes, 0.0)
    else:
        verts[-1] = (a, y_end)
    return CharacteristicPath(ch.branch, verts, ch.step, slopes, ch.reached_sonic, ch.degenerate)


def classify_point(dom: Region, p, tol: float = 1e-9, sonic_tol: float = SONIC_TOL) -> str:
    """Return one of elliptic, hyperbolic, sonic, boundary, exterior."""
    x, y = float(p[0]), float(p[1])
    if _distance_to_arcs(dom, x, y) <= tol:
        return "boundary"
    if not bool(dom.contains(x, y)):
        return "exterior"
    if abs(x) <= sonic_tol:
        return "sonic"
    return "elliptic" if x > 0 else "hyperbolic"


def _distance_to_arcs(dom: Region, x: float, y: float) -> float:
    best = math.inf
    for arc in dom.arcs:
        p0 = arc.vertices[:-1]
        p1 = arc.vertices[1:]
        d = p1 - p0
        L2 = np.einsum("ij,ij->i", d, d)
        t = np.clip(np.einsum("ij,ij->i", np.array([x, y]) - p0, d) / np.where(L2 > 0, L2, 1.0), 0, 1)
        q = p0 + t[:, None] * d
        best = min(best, float(np.min(np.hypot(q[:, 0] - x, q[:, 1] - y))))
    return best


def domain_from_dict(data: dict, K: TypeChangeFn) -> MixedDomain:
    """Rebuild a domain from its JSON form by re-tracing with K."""
    return build_domain(K, data["a"], data["b"], data["d"])
