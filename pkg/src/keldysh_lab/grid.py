"""Tensor grids over a region, grid fields, finite differences and quadrature.

The grid is aligned so that x = 0 and y = 0 are node lines whenever the
region straddles them.  Area integrals are computed row by row: each grid row
y = y_j is integrated in x over [x_left(y_j), xmax] with a trapezoid rule whose
partial end cell is closed by a local polynomial fit, then rows are combined
with the trapezoid rule in y.  Every quadrature is linear in the nodal values,
so it is exposed as a weight array as well as an integral.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import InvalidDomain, InvalidInput, InvalidParameter
from .geometry import SONIC_TOL, Region

PARTS = ("all", "omega_plus", "omega_minus")
_EPS = 1e-9


class Node(IntEnum):
    EXTERIOR = 0
    ELLIPTIC = 1
    HYPERBOLIC = 2
    SONIC = 3
    BOUNDARY = 4


@dataclass
class QuadratureResult:
    value: float
    estimated_error: float = math.inf

    def __float__(self) -> float:
        return float(self.value)


# --------------------------------------------------------------------- grid

@dataclass(eq=False)
class Grid:
    """Nodes ``xs`` x ``ys`` laid over ``region``; ``pad`` extra layers outside.

    ``inside`` marks nodes of the closed region, ``mask`` their class.
    Rows ``jlo..jhi`` are the rows with ymin <= y <= ymax.
    """

    region: Region
    xs: np.ndarray
    ys: np.ndarray
    pad: int = 0
    inside: np.ndarray = field(init=False, repr=False)
    mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.ys = np.asarray(self.ys, dtype=float)
        self.hx = float(self.xs[1] - self.xs[0])
        self.hy = float(self.ys[1] - self.ys[0])
        r = self.region
        ty = _EPS * self.hy
        rows = np.flatnonzero((self.ys >= r.ymin - ty) & (self.ys <= r.ymax + ty))
        if rows.size < 2:
            raise InvalidDomain("grid has fewer than two rows inside the region")
        self.jlo, self.jhi = int(rows[0]), int(rows[-1])
        yc = np.clip(self.ys, r.ymin, r.ymax)
        self.row_left = np.where((self.ys >= r.ymin - ty) & (self.ys <= r.ymax + ty),
                                 np.asarray(r.x_left(yc), dtype=float), np.nan)
        self.row_slope = np.asarray(r.x_left_slope(yc), dtype=float)
        X, Y = self.mesh
        tx = _EPS * self.hx
        in_rows = np.zeros(self.ny, dtype=bool)
        in_rows[rows] = True
        xl = self.row_left[None, :]
        with np.errstate(invalid="ignore"):
            inside = in_rows[None, :] & (X >= xl - tx) & (X <= r.xmax + tx)
            on_edge = (np.abs(X - xl) <= tx) | (np.abs(X - r.xmax) <= tx)
        on_edge |= np.isin(np.arange(self.ny), [self.jlo, self.jhi])[None, :]
        self.inside = inside
        mask = np.full(X.shape, Node.EXTERIOR, dtype=np.int8)
        mask[inside & (X > SONIC_TOL)] = Node.ELLIPTIC
        mask[inside & (X < -SONIC_TOL)] = Node.HYPERBOLIC
        mask[inside & (np.abs(X) <= SONIC_TOL)] = Node.SONIC
        mask[inside & on_edge] = Node.BOUNDARY
        self.mask = mask
        zero = np.flatnonzero(np.abs(self.xs) <= tx)
        self.i_zero = int(zero[0]) if zero.size else None

    # geometry helpers -------------------------------------------------
    @property
    def nx(self) -> int:
        return self.xs.size

    @property
    def ny(self) -> int:
        return self.ys.size

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def origin(self) -> tuple[float, float]:
        return (float(self.xs[0]), float(self.ys[0]))

    @property
    def h(self) -> float:
        return max(self.hx, self.hy)

    @property
    def mesh(self):
        return np.meshgrid(self.xs, self.ys, indexing="ij")

    def index_x(self, x: float) -> int:
        """Index of the node at ``x``; raises if ``x`` is not a node."""
        i = int(round((x - self.xs[0]) / self.hx))
        if not 0 <= i < self.nx or abs(self.xs[i] - x) > 1e-7 * self.hx:
            raise InvalidParameter(f"x={x} is not a grid node")
        return i

    def column_bounds(self, part: str):
        """Per-row integration limits (A_j, B_j) for a part of the region."""
        r = self.region
        if part not in PARTS:
            raise InvalidParameter(f"unknown region part {part!r}")
        A = self.row_left.copy()
        B = np.full(self.ny, r.xmax)
        if part == "omega_plus":
            A = np.maximum(A, 0.0)
        elif part == "omega_minus":
            B = np.minimum(B, 0.0)
        return A, B

    # construction of fields -------------------------------------------
    def field(self, values, valid=None, name: str = "") -> "GridField":
        values = np.broadcast_to(np.asarray(values, dtype=float), self.shape).copy()
        if valid is None:
            valid = np.ones(self.shape, dtype=bool)
        return GridField(self, values, np.asarray(valid, dtype=bool).copy(), name)

    def sample(self, fn, where: str = "all", name: str = "") -> "GridField":
        """Evaluate ``fn(X, Y)`` at nodes; ``where='inside'`` keeps only region nodes."""
        X, Y = self.mesh
        with np.errstate(all="ignore"):
            vals = np.broadcast_to(np.asarray(fn(X, Y), dtype=float), self.shape)
        valid = np.ones(self.shape, dtype=bool) if where == "all" else self.inside.copy()
        return GridField(self, np.where(valid, vals, 0.0), valid, name)

    def zeros(self, where: str = "inside") -> "GridField":
        return self.sample(lambda X, Y: np.zeros_like(X), where)

    # refinement ---------------------------------------------------------
    def coarsen(self) -> "Grid | None":
        """Every-other-node grid over the same region, or None if not aligned."""
        if self.pad % 2 or (self.nx - 1) % 2 or (self.ny - 1) % 2 or self.jlo % 2:
            return None
        if self.i_zero is not None and self.i_zero % 2:
            return None
        if (self.ny - 2 * self.pad) < 5:
            return None
        return Grid(self.region, self.xs[::2], self.ys[::2], self.pad // 2)

    def to_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "hx": self.hx, "hy": self.hy,
                "x0": self.origin[0], "y0": self.origin[1], "pad": self.pad}


def make_grid(region: Region, n: int, pad: int = 0) -> Grid:
    """Grid with ``n`` rows across the region, x = 0 and y-kinks on node lines.

    The x spacing is the y spacing rounded so that xmax and 0 are nodes; node
    counts on each side of x = 0 are kept even so the grid can be coarsened.
    """
    if n < 5:
        raise InvalidParameter("need at least 5 grid rows")
    if pad < 0:
        raise InvalidParameter("pad must be non-negative")
    r = region
    hy = (r.ymax - r.ymin) / (n - 1)
    for yk in r.y_kinks:
        t = (yk - r.ymin) / hy
        if abs(t - round(t)) > 1e-9:
            raise InvalidParameter(f"n={n} does not put y={yk} on a node; use an odd n")

    def even_up(k: int) -> int:
        return k + (k % 2)

    if r.xmin < 0.0 < r.xmax:
        nplus = even_up(max(2, math.ceil(r.xmax / hy - 1e-9)))
        hx = r.xmax / nplus
        nminus = even_up(math.ceil(-r.xmin / hx - 1e-9))
        xs = hx * np.arange(-nminus - pad, nplus + pad + 1)
    else:
        N = even_up(max(2, math.ceil((r.xmax - r.xmin) / hy - 1e-9)))
        hx = (r.xmax - r.xmin) / N
        xs = r.xmin + hx * np.arange(-pad, N + pad + 1)
    ys = r.ymin + hy * np.arange(-pad, n + pad)
    return Grid(region, xs, ys, pad)


# --------------------------------------------------------------- grid field

def _combine(a, b, op):
    if isinstance(b, GridField):
        if b.grid is not a.grid:
            raise InvalidInput("fields live on different grids")
        with np.errstate(all="ignore"):
            vals = op(a.values, b.values)
        return GridField(a.grid, vals, a.valid & b.valid)
    with np.errstate(all="ignore"):
        vals = op(a.values, np.asarray(b, dtype=float))
    return GridField(a.grid, vals, a.valid.copy())


@dataclass(eq=False)
class GridField:
    """Values on a grid plus a ``valid`` mask; non-finite values are never valid."""

    grid: Grid
    values: np.ndarray
    valid: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.valid = self.valid & np.isfinite(self.values)
        self.values = np.where(self.valid, self.values, 0.0)

    nx = property(lambda self: self.grid.nx)
    ny = property(lambda self: self.grid.ny)
    hx = property(lambda self: self.grid.hx)
    hy = property(lambda self: self.grid.hy)
    origin = property(lambda self: self.grid.origin)
    mask = property(lambda self: self.grid.mask)

    def restrict(self, keep) -> "GridField":
        return GridField(self.grid, self.values, self.valid & keep, self.name)

    def copy(self) -> "GridField":
        return GridField(self.grid, self.values.copy(), self.valid.copy(), self.name)

    def max_abs(self, where=None) -> float:
        sel = self.valid & (self.grid.inside if where is None else where)
        return float(np.max(np.abs(self.values[sel]))) if sel.any() else 0.0

    def __add__(self, o):
        return _combine(self, o, np.add)

    __radd__ = __add__

    def __sub__(self, o):
        return _combine(self, o, np.subtract)

    def __rsub__(self, o):
        return _combine(self, o, lambda p, q: q - p)

    def __mul__(self, o):
        return _combine(self, o, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return _combine(self, o, np.divide)

    def __neg__(self):
        return GridField(self.grid, -self.values, self.valid.copy())

    def __pow__(self, p):
        return _combine(self, p, np.power)


def inner(f: GridField, g: GridField) -> float:
    """Plain discrete pairing sum(f g) hx hy over valid region nodes."""
    sel = f.valid & g.valid & f.grid.inside
    return float(np.sum(f.values[sel] * g.values[sel]) * f.hx * f.hy)


# ------------------------------------------------------------- derivatives

_DIFF = {"x": (0, 1), "y": (1, 1), "xx": (0, 2), "yy": (1, 2)}


def diff(fld: GridField, which: str, side: str | None = None) -> GridField:
    """Finite-difference derivative ``x``, ``y``, ``xx``, ``yy`` or ``xy``.

    ``side='plus'`` or ``'minus'`` restricts the stencils to x >= 0 or x <= 0,
    giving one-sided derivatives on the sonic line from that side.
    """
    if fld.nx < 3 or fld.ny < 3:
        raise InvalidParameter("diff needs at least 3 nodes in each direction")
    valid = fld.valid
    if side is not None:
        X = fld.grid.mesh[0]
        keep = X >= -SONIC_TOL if side == "plus" else X <= SONIC_TOL
        valid = valid & keep
    if which == "xy":
        return diff(diff(GridField(fld.grid, fld.values, valid), "x"), "y")
    if which not in _DIFF:
        raise InvalidParameter(f"unknown derivative {which!r}")
    axis, order = _DIFF[which]
    h = fld.hx if axis == 0 else fld.hy
    vals, ok = _kernels.diff_axis(fld.values, valid, h, axis, order)
    return GridField(fld.grid, vals, ok)


def stencil_matrix(valid: np.ndarray, h: float, axis: int, order: int):
    """Sparse matrix of the ``diff`` stencils on the flattened (C-order) grid.

    Built by probing the derivative kernel with unit vectors coloured mod 7
    along ``axis``: stencils span at most 4 consecutive nodes, so each output
    node sees exactly one probed node per colour.  Returns ``(D, ok)``.
    """
    from scipy import sparse

    shape = valid.shape
    idx = np.arange(valid.size).reshape(shape)
    line = np.arange(shape[axis]).reshape((-1, 1) if axis == 0 else (1, -1))
    rows, cols, vals = [], [], []
    ok = None
    for color in range(7):
        probe = np.broadcast_to((line % 7) == color, shape).astype(float)
        out, ok = _kernels.diff_axis(probe, valid, h, axis, order)
        hit = ok & (out != 0.0)
        r = idx[hit]
        # the probed node feeding each output node along the axis
        pos = np.broadcast_to(line, shape)[hit]
        offset = (color - pos) % 7
        offset = np.where(offset > 3, offset - 7, offset)
        src_line = pos + offset
        other = np.nonzero(hit)[1 - axis]
        c = (src_line * shape[1] + other) if axis == 0 else (other * shape[1] + src_line)
        rows.append(r)
        cols.append(c)
        vals.append(out[hit])
    D = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(valid.size, valid.size))
    return D, ok


# -------------------------------------------------------------- quadrature

def _lagrange(nodes: np.ndarray, t) -> np.ndarray:
    """Lagrange basis values ``L[k, q]`` of ``nodes`` at points ``t``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    L = np.ones((nodes.size, t.size))
    for k in range(nodes.size):
        for m in range(nodes.size):
            if m != k:
                L[k] *= (t - nodes[m]) / (nodes[k] - nodes[m])
    return L


def point_weights(vrow: np.ndarray, x0: float, h: float, X: float):
    """Indices and weights reproducing the value at ``X`` on a line of nodes.

    Uses a centred cubic when possible and otherwise the closest one-sided
    stencil built from valid nodes (cubic, then quadratic, then linear).
    """
    n = vrow.size
    t = (X - x0) / h
    i = int(round(t))
    if abs(t - i) <= _EPS and 0 <= i < n and vrow[i]:
        return np.array([i]), np.array([1.0])
    c = int(math.floor(t))
    candidates = (
        range(c - 1, c + 3), range(c, c + 4), range(c - 2, c + 2),
        range(c + 1, c + 5), range(c - 3, c + 1),
        range(c, c + 3), range(c - 1, c + 2), range(c + 1, c + 4), range(c - 2, c + 1),
        range(c, c + 2), range(c + 1, c + 3), range(c - 1, c + 1),
        range(c + 1, c + 2), range(c, c + 1),
    )
    for cand in candidates:
        idx = np.fromiter(cand, dtype=int)
        if idx[0] >= 0 and idx[-1] < n and vrow[idx].all():
            return idx, _lagrange(idx.astype(float), t)[:, 0]
    raise InvalidInput(f"no valid nodes near x={X:.6g} for interpolation")


def _partial_cell(vrow, x0, h, A, inode, step, w):
    """Add weights for the integral between a boundary point A and node inode.

    ``step`` is +1 when A lies left of inode and -1 when it lies right.
    """
    xi = x0 + inode * h
    theta = abs(xi - A)
    pidx, pw = point_weights(vrow, x0, h, A)
    nxt = inode + step
    lo, hi = min(A, xi), max(A, xi)
    gq = 0.5 * (lo + hi) + np.array([-1.0, 1.0]) * (hi - lo) / (2.0 * math.sqrt(3.0))
    if 0 <= nxt < vrow.size and vrow[nxt]:
        nodes = np.array([A, xi, x0 + nxt * h])
        c = _lagrange(nodes, gq).sum(axis=1) * theta / 2.0
        w[pidx] += c[0] * pw
        w[inode] += c[1]
        w[nxt] += c[2]
    else:
        w[pidx] += 0.5 * theta * pw
        w[inode] += 0.5 * theta


def row_weights(vrow: np.ndarray, x0: float, h: float, A: float, B: float) -> np.ndarray:
    """Weights on one grid line for the integral over [A, B]."""
    n = vrow.size
    w = np.zeros(n)
    if B - A <= _EPS * h:
        return w
    i_lo = int(math.ceil((A - x0) / h - _EPS))
    i_hi = int(math.floor((B - x0) / h + _EPS))
    if i_hi < i_lo:
        for X in (A, B):
            pidx, pw = point_weights(vrow, x0, h, X)
            w[pidx] += 0.5 * (B - A) * pw
        return w
    if not vrow[i_lo:i_hi + 1].all():
        raise InvalidInput("invalid node inside the integration interval")
    if i_hi > i_lo:
        w[i_lo:i_hi + 1] += h
        w[i_lo] -= 0.5 * h
        w[i_hi] -= 0.5 * h
    if x0 + i_lo * h - A > _EPS * h:
        _partial_cell(vrow, x0, h, A, i_lo, +1, w)
    if B - (x0 + i_hi * h) > _EPS * h:
        _partial_cell(vrow, x0, h, B, i_hi, -1, w)
    return w


def _y_weights(grid: Grid) -> np.ndarray:
    wy = np.zeros(grid.ny)
    wy[grid.jlo:grid.jhi + 1] = grid.hy
    wy[grid.jlo] *= 0.5
    wy[grid.jhi] *= 0.5
    return wy


def area_weights(grid: Grid, valid: np.ndarray, part: str = "all") -> np.ndarray:
    """Weights W with sum(W * f) approximating the area integral of f."""
    A, B = grid.column_bounds(part)
    wy = _y_weights(grid)
    W = np.zeros(grid.shape)
    x0 = grid.xs[0]
    for j in range(grid.jlo, grid.jhi + 1):
        W[:, j] = wy[j] * row_weights(valid[:, j], x0, grid.hx, A[j], B[j])
    return W


def flux_weights(grid: Grid, valid: np.ndarray, part: str = "all"):
    """Weights (W1, W2) for the outward flux of (F1, F2) through the part's boundary.

    sum(W1 F1 + W2 F2) approximates the counter-clockwise integral of
    F1 dy - F2 dx, which equals the area integral of div F.
    """
    A, B = grid.column_bounds(part)
    wy = _y_weights(grid)
    x0, hx = grid.xs[0], grid.hx
    W1 = np.zeros(grid.shape)
    W2 = np.zeros(grid.shape)
    jlo, jhi = grid.jlo, grid.jhi
    W2[:, jlo] -= row_weights(valid[:, jlo], x0, hx, A[jlo], B[jlo])
    W2[:, jhi] += row_weights(valid[:, jhi], x0, hx, A[jhi], B[jhi])
    iB = grid.index_x(B[jlo])
    W1[iB, :] += wy
    on_curve = grid.row_left > 0.0 if part == "omega_plus" else np.ones(grid.ny, dtype=bool)
    for j in range(jlo, jhi + 1):
        pidx, pw = point_weights(valid[:, j], x0, hx, A[j])
        W1[pidx, j] -= wy[j] * pw
        if on_curve[j]:
            W2[pidx, j] += wy[j] * grid.row_slope[j] * pw
    return W1, W2


def _richardson(fine: float, coarse: float | None) -> float:
    return math.inf if coarse is None else abs(fine - coarse) / 3.0


def integrate_area(fld: GridField, region: str = "all", estimate: bool = True) -> QuadratureResult:
    """Cut-cell trapezoid integral over the region or one side of x = 0."""
    g = fld.grid
    val = float(np.sum(area_weights(g, fld.valid, region) * fld.values))
    coarse = None
    if estimate:
        cg = g.coarsen()
        if cg is not None:
            try:
                coarse = float(np.sum(area_weights(cg, fld.valid[::2, ::2], region)
                                      * fld.values[::2, ::2]))
            except InvalidInput:
                coarse = None
    return QuadratureResult(val, _richardson(val, coarse))


def outward_flux(F1: GridField, F2: GridField, region: str = "all",
                 estimate: bool = True) -> QuadratureResult:
    """Boundary integral of F1 dy - F2 dx (counter-clockwise) from grid fields."""
    g = F1.grid
    valid = F1.valid & F2.valid

    def total(grid, v, f1, f2):
        W1, W2 = flux_weights(grid, v, region)
        return float(np.sum(W1 * f1) + np.sum(W2 * f2))

    val = total(g, valid, F1.values, F2.values)
    coarse = None
    if estimate and (cg := g.coarsen()) is not None:
        try:
            coarse = total(cg, valid[::2, ::2], F1.values[::2, ::2], F2.values[::2, ::2])
        except InvalidInput:
            coarse = None
    return QuadratureResult(val, _richardson(val, coarse))


# --------------------------------------------- boundary line integrals

@dataclass
class BoundaryIntegral(QuadratureResult):
    cut_value: float = 0.0


def _check_closed(region: Region, tol: float = 1e-6) -> None:
    arcs = region.arcs
    for prev, nxt in zip(arcs, arcs[1:] + arcs[:1]):
        if np.linalg.norm(np.asarray(prev.vertices[-1]) - np.asarray(nxt.vertices[0])) > tol:
            raise InvalidDomain(f"boundary is open between {prev.name} and {nxt.name}")


def _segment(p, q, n):
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    return (1 - t) * np.asarray(p, dtype=float) + t * np.asarray(q, dtype=float)


def _loop(region: Region, part: str, n: int):
    """Closed polyline pieces (name, points) for a part, counter-clockwise."""
    r = region
    xl = lambda y: float(r.x_left(y))  # noqa: E731
    lo_x, hi_x = xl(r.ymin), xl(r.ymax)
    if part == "omega_plus":
        lo_x, hi_x = max(lo_x, 0.0), max(hi_x, 0.0)
    xr = r.xmax if part != "omega_minus" else 0.0
    pieces = [("bottom", _segment((lo_x, r.ymin), (xr, r.ymin), n)),
              ("right", _segment((xr, r.ymin), (xr, r.ymax), n)),
              ("top", _segment((xr, r.ymax), (hi_x, r.ymax), n))]
    if part == "omega_plus" and r.xmin < 0.0:
        pieces.append(("cut", _segment((0.0, r.ymax), (0.0, r.ymin), n)))
    else:
        knots = sorted({r.ymin, r.ymax, *r.y_kinks})
        ys = np.concatenate([np.linspace(a, b, n + 1)[:-1] for a, b in zip(knots, knots[1:])]
                            + [np.array([r.ymax])])[::-1]
        pieces.append(("left", np.column_stack([np.asarray(r.x_left(ys), dtype=float), ys])))
    if part == "omega_minus":
        pieces[1] = ("cut", _segment((0.0, r.ymax), (0.0, r.ymin), n)[::-1])
    return pieces


def _line_terms(P, Q, pts):
    x, y = pts[:, 0], pts[:, 1]
    p = np.broadcast_to(np.asarray(P(x, y), dtype=float), x.shape)
    q = np.broadcast_to(np.asarray(Q(x, y), dtype=float), x.shape)
    return 0.5 * (p[1:] + p[:-1]) * np.diff(x) + 0.5 * (q[1:] + q[:-1]) * np.diff(y)


def _line_integral(P, Q, region, parts, n, P_minus, Q_minus):
    total, cut = 0.0, None
    for part in parts:
        Pp, Qp = (P_minus, Q_minus) if part == "omega_minus" else (P, Q)
        for name, pts in _loop(region, part, n):
            if np.ptp(pts, axis=0).max() == 0.0:
                continue
            terms = _line_terms(Pp, Qp, pts)
            if name == "cut":
                cut = terms if cut is None else cut + terms[::-1]
            else:
                total += float(np.sum(terms))
    cut_value = 0.0 if cut is None else float(np.sum(cut))
    return total + cut_value, cut_value


def integrate_boundary(P, Q, dom: Region, cut: bool = False, n: int | None = None,
                       P_minus=None, Q_minus=None) -> BoundaryIntegral:
    """Trapezoid rule for the counter-clockwise integral of P dx + Q dy.

    ``P`` and ``Q`` are vectorized callables of (x, y).  Characteristic arcs
    are resampled from the region's smooth boundary profile.  With ``cut`` the
    two sides of x = 0 are integrated as separate loops (optionally with
    ``P_minus``/``Q_minus`` on the x < 0 side) and the x = 0 segments are
    returned in ``cut_value``.
    """
    _check_closed(dom)
    n = n or 4000
    if cut and dom.xmin < 0.0 < dom.xmax:
        parts = ("omega_plus", "omega_minus")
    else:
        parts = ("all",)
    P_minus = P_minus or P
    Q_minus = Q_minus or Q
    val, cut_value = _line_integral(P, Q, dom, parts, n, P_minus, Q_minus)
    coarse, _ = _line_integral(P, Q, dom, parts, n // 2, P_minus, Q_minus)
    return BoundaryIntegral(val, abs(val - coarse) / 3.0, cut_value)


# ----------------------------------------------------------------- sampling

def sample_points(fld: GridField, pts) -> tuple[np.ndarray, np.ndarray]:
    """Interpolate a field at arbitrary points.

    Bicubic Lagrange on a fully valid 4x4 block, otherwise a quadratic
    least-squares fit to the valid nodes of the surrounding 6x6 block.
    Returns ``(values, ok)``.
    """
    g = fld.grid
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    out = np.full(len(pts), np.nan)
    ok = np.zeros(len(pts), dtype=bool)
    for k, (x, y) in enumerate(pts):
        tx = (x - g.xs[0]) / g.hx
        ty = (y - g.ys[0]) / g.hy
        ci, cj = int(math.floor(tx)), int(math.floor(ty))
        ii = np.arange(ci - 1, ci + 3)
        jj = np.arange(cj - 1, cj + 3)
        if ii[0] >= 0 and jj[0] >= 0 and ii[-1] < g.nx and jj[-1] < g.ny \
                and fld.valid[np.ix_(ii, jj)].all():
            lx = _lagrange(ii.astype(float), tx)[:, 0]
            ly = _lagrange(jj.astype(float), ty)[:, 0]
            out[k] = lx @ fld.values[np.ix_(ii, jj)] @ ly
            ok[k] = True
            continue
        ii = np.arange(max(ci - 2, 0), min(ci + 4, g.nx))
        jj = np.arange(max(cj - 2, 0), min(cj + 4, g.ny))
        I, J = np.meshgrid(ii, jj, indexing="ij")
        sel = fld.valid[I, J]
        if sel.sum() < 8:
            continue
        u, v = I[sel] - tx, J[sel] - ty
        V = np.column_stack([np.ones_like(u), u, v, u * u, u * v, v * v])
        coef = np.linalg.lstsq(V, fld.values[I[sel], J[sel]], rcond=None)[0]
        out[k] = coef[0]
        ok[k] = True
    return out, ok


# ----------------------------------------------------------------------- IO

MAGIC = b"KLGF"
_HEADER = struct.Struct("<4sIIffff4x")


def to_csv(fld: GridField, path) -> None:
    """Rows ``x,y,value`` for every valid node inside the region."""
    X, Y = fld.grid.mesh
    sel = fld.valid & fld.grid.inside
    data = np.column_stack([X[sel], Y[sel], fld.values[sel]])
    np.savetxt(path, data, delimiter=",", fmt="%.12e", header="x,y,value", comments="")


def to_binary(fld: GridField, path) -> None:
    """32-byte header then float64 values, row-major over (x index, y index)."""
    g = fld.grid
    hdr = _HEADER.pack(MAGIC, g.nx, g.ny, g.hx, g.hy, g.origin[0], g.origin[1])
    with open(path, "wb") as fh:
        fh.write(hdr)
        fh.write(np.ascontiguousarray(fld.values, dtype="<f8").tobytes())


def read_binary(path) -> tuple[dict, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise InvalidInput("file too short for a grid header")
    magic, nx, ny, hx, hy, x0, y0 = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise InvalidInput(f"bad magic {magic!r}")
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if vals.size != nx * ny:
        raise InvalidInput("payload size does not match header")
    return ({"nx": nx, "ny": ny, "hx": hx, "hy": hy, "x0": x0, "y0": y0},
            vals.reshape(nx, ny).copy())
