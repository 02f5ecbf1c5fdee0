"""Distribution solutions: (u, L* xi) = <f, xi> for a family of bump test functions.

The trial space is piecewise constant on an n x n cell partition of a
rectangle (u is only asked to be square integrable, and no boundary values are
imposed); continuous bilinear trials are available as an option.  Test
functions are tensor quartic B-splines with knot spacing H/2 whose supports lie
strictly inside the rectangle.  Pairings use the midpoint rule on cells that
split each trial cell ``refine`` times per direction, with L* xi differentiated
exactly.
A fixed family of coarser bumps at seeded random positions is held out of the
fit and used to judge it; being the same on every rung, it makes residuals
comparable along a ladder.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse

from .bumps import Bump, profile, random_bumps
from .errors import InvalidInput, InvalidParameter
from .geometry import Rectangle
from .grid import Grid, GridField
from .operators import OperatorSpec
from .report import LadderReport, observed_orders


@dataclass
class DualSolveResult:
    u: GridField
    test_count: int
    pairing_residual: float       # held-out set
    training_residual: float
    trial_count: int
    rank: int
    asymmetry: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"test_count": self.test_count, "pairing_residual": self.pairing_residual,
                "training_residual": self.training_residual, "trial_count": self.trial_count,
                "rank": self.rank, "asymmetry": self.asymmetry, "sup_norm": self.u.max_abs()}


def _adjoint_coefficients(spec: OperatorSpec):
    """(K, c1, c0) with L* xi = K xi_xx + c1 xi_x + c0 xi + xi_yy."""
    if spec.form == "kappa":
        if not 1.0 <= spec.kappa <= 1.5:
            raise InvalidParameter("distribution solves need kappa in [1, 3/2]")
        kap = spec.kappa
        return spec.K, (lambda X: np.full_like(X, 2.0 - kap)), (lambda X: np.zeros_like(X))
    if spec.k != 1.0:
        raise InvalidParameter("distribution solves with general K need k = 1")
    return spec.K, spec.K.deriv1, (lambda X: np.zeros_like(X))


def _hat_matrix(nodes: np.ndarray, pts: np.ndarray) -> sparse.csr_matrix:
    """Linear interpolation from ``nodes`` (uniform) to ``pts``."""
    H = nodes[1] - nodes[0]
    t = (pts - nodes[0]) / H
    i = np.clip(np.floor(t + 1e-12).astype(int), 0, nodes.size - 2)
    s = t - i
    rows = np.repeat(np.arange(pts.size), 2)
    cols = np.stack([i, i + 1], axis=1).ravel()
    vals = np.stack([1.0 - s, s], axis=1).ravel()
    return sparse.csr_matrix((vals, (rows, cols)), shape=(pts.size, nodes.size))


def _midpoints(lo: float, hi: float, m: int) -> np.ndarray:
    edges = np.linspace(lo, hi, m + 1)
    return 0.5 * (edges[1:] + edges[:-1])


def _cell_matrix(m: int, refine: int) -> sparse.csr_matrix:
    """Indicator of trial cell for each of the m * refine quadrature cells."""
    q = m * refine
    return sparse.csr_matrix((np.ones(q), (np.arange(q), np.arange(q) // refine)),
                             shape=(q, m))


def _centres(lo: float, hi: float, H: float) -> np.ndarray:
    half = 1.25 * H
    count = int(np.floor((hi - lo - 2 * half) / (0.5 * H) + 1e-9)) + 1
    return lo + half + 0.5 * H * np.arange(max(count, 0))


def lattice_bumps(box: Rectangle, n: int) -> list[Bump]:
    """Bumps with knot spacing H/2 on a lattice of spacing H/2, H = side / n."""
    Hx, Hy = (box.xmax - box.xmin) / n, (box.ymax - box.ymin) / n
    return [Bump(cx - 1.25 * Hx, cx + 1.25 * Hx, cy - 1.25 * Hy, cy + 1.25 * Hy)
            for cx in _centres(box.xmin, box.xmax, Hx)
            for cy in _centres(box.ymin, box.ymax, Hy)]


def heldout_bumps(box: Rectangle, count: int = 24, seed: int = 42) -> list[Bump]:
    """A fixed family of coarse bumps at random positions, shared by every rung
    of a ladder so residuals on it are comparable across resolutions.  They
    keep 1/8 of the side away from the edges, where coarse lattices reach."""
    mx, my = 0.125 * (box.xmax - box.xmin), 0.125 * (box.ymax - box.ymin)
    inner = (box.xmin + mx, box.xmax - mx, box.ymin + my, box.ymax - my)
    return random_bumps(inner, count, np.random.default_rng(seed), width=(0.15, 0.35))


class _Pairings:
    """Sparse matrices of test functions and their adjoint images at the
    quadrature points, one row per bump, quadrature weights included."""

    def __init__(self, spec, box: Rectangle, n: int, refine: int, bumps: list[Bump]):
        Kf, c1f, c0f = _adjoint_coefficients(spec)
        for bp in bumps:
            if (bp.x0 < box.xmin - 1e-12 or bp.x1 > box.xmax + 1e-12
                    or bp.y0 < box.ymin - 1e-12 or bp.y1 > box.ymax + 1e-12):
                raise InvalidInput("test function support leaves the rectangle")
        self.xq = _midpoints(box.xmin, box.xmax, n * refine)
        self.yq = _midpoints(box.ymin, box.ymax, n * refine)
        w = (self.xq[1] - self.xq[0]) * (self.yq[1] - self.yq[0])
        Kx, c1, c0 = (np.asarray(g(self.xq), dtype=float) for g in (Kf, c1f, c0f))
        rows, cols, xi_vals, lxi_vals = [], [], [], []
        ny = self.yq.size
        for r, bp in enumerate(bumps):
            ix = np.flatnonzero((self.xq > bp.x0) & (self.xq < bp.x1))
            iy = np.flatnonzero((self.yq > bp.y0) & (self.yq < bp.y1))
            sx, sy = 5.0 / (bp.x1 - bp.x0), 5.0 / (bp.y1 - bp.y0)
            tx, ty = sx * (self.xq[ix] - bp.x0), sy * (self.yq[iy] - bp.y0)
            p0, p1, p2 = (profile(tx, k) * sx**k for k in range(3))
            q0, q2 = profile(ty, 0), profile(ty, 2) * sy**2
            xi = np.outer(p0, q0)
            lxi = np.outer(Kx[ix] * p2 + c1[ix] * p1 + c0[ix] * p0, q0) + np.outer(p0, q2)
            flat = (ix[:, None] * ny + iy[None, :]).ravel()
            rows.append(np.full(flat.size, r))
            cols.append(flat)
            xi_vals.append(w * xi.ravel())
            lxi_vals.append(w * lxi.ravel())
        shape = (len(bumps), self.xq.size * ny)
        rows, cols = np.concatenate(rows), np.concatenate(cols)
        self.Xi = sparse.csr_matrix((np.concatenate(xi_vals), (rows, cols)), shape=shape)
        self.LXi = sparse.csr_matrix((np.concatenate(lxi_vals), (rows, cols)), shape=shape)
        self.weight = w

    def rhs(self, f) -> np.ndarray:
        X, Y = np.meshgrid(self.xq, self.yq, indexing="ij")
        if isinstance(f, (GridField, np.ndarray)):
            fv = f.values if isinstance(f, GridField) else f
            if fv.shape != X.shape:
                raise InvalidParameter("f must be sampled at the quadrature nodes")
        elif callable(f):
            fv = np.broadcast_to(np.asarray(f(X, Y), dtype=float), X.shape)
        else:
            fv = np.full(X.shape, float(f))
        return self.Xi @ fv.ravel()


def quadrature_nodes(box: Rectangle, n: int, refine: int = 8):
    """Meshes (X, Y) of the points where ``distribution_solve`` evaluates f."""
    return np.meshgrid(_midpoints(box.xmin, box.xmax, n * refine),
                       _midpoints(box.ymin, box.ymax, n * refine), indexing="ij")


def distribution_solve(spec: OperatorSpec, f, box: Rectangle, n: int, refine: int = 4,
                       trial: str = "constant", trial_ratio: int = 2, rcond: float = 1e-12,
                       symmetry_check: bool = False,
                       heldout: list[Bump] | None = None) -> DualSolveResult:
    """Minimum-norm least-squares u for the test lattice with H = side / n.

    The trial space has ``trial_ratio`` cells per H in each direction, so it
    is richer than the test family and the training pairings can be met
    exactly; the minimum-norm choice removes the remaining freedom.

    ``f`` is a callable, a constant, or an array of values at
    ``quadrature_nodes(box, n * trial_ratio, refine)``.  For ``trial='constant'`` the returned field holds
    cell values at cell centres; for ``'bilinear'`` it holds nodal values.
    """
    if n < 4:
        raise InvalidParameter("need at least 4 cells per direction")
    if trial not in ("constant", "bilinear"):
        raise InvalidParameter(f"unknown trial space {trial!r}")
    nt = n * trial_ratio
    train = _Pairings(spec, box, nt, refine, lattice_bumps(box, n))
    held = _Pairings(spec, box, nt, refine, heldout if heldout is not None
                     else heldout_bumps(box))
    n = nt
    if trial == "constant":
        xs, ys = _midpoints(box.xmin, box.xmax, n), _midpoints(box.ymin, box.ymax, n)
        P = sparse.kron(_cell_matrix(n, refine), _cell_matrix(n, refine)).tocsc()
    else:
        xs = np.linspace(box.xmin, box.xmax, n + 1)
        ys = np.linspace(box.ymin, box.ymax, n + 1)
        P = sparse.kron(_hat_matrix(xs, train.xq), _hat_matrix(ys, train.yq)).tocsc()
    A = (train.LXi @ P).toarray()
    r = train.rhs(f)
    coef, _, rank, _ = linalg.lstsq(A, r, cond=rcond, lapack_driver="gelsd")
    Ah = (held.LXi @ P).toarray()
    grid = Grid(box, xs, ys)
    u = GridField(grid, coef.reshape(grid.shape), np.ones(grid.shape, dtype=bool), "u")
    res = DualSolveResult(u, held.Xi.shape[0], float(np.max(np.abs(Ah @ coef - held.rhs(f)))),
                          float(np.max(np.abs(A @ coef - r))), P.shape[1], int(rank))
    if symmetry_check:
        res.asymmetry = pairing_asymmetry(held)
    return res


def pairing_asymmetry(pairs: _Pairings) -> float:
    """max |S - S^T| / max |S| with S_jl = <xi_l, L* xi_j>; zero for a
    self-adjoint operator up to quadrature error."""
    S = (pairs.LXi @ pairs.Xi.T).toarray() / pairs.weight
    return float(np.max(np.abs(S - S.T)) / np.max(np.abs(S)))


def dual_experiment(spec: OperatorSpec, box: Rectangle, f, bases=(4, 8, 16),
                    refine: int = 4, trial: str = "constant", trial_ratio: int = 2,
                    seed: int = 42) -> LadderReport:
    """Held-out pairing residual as the test lattice is refined."""
    rep = LadderReport("dual", info={"operator": spec.to_dict(), "box": box.to_dict()})
    self_adjoint = spec.form != "kappa"
    held = heldout_bumps(box, seed=seed)
    for n in bases:
        sol = distribution_solve(spec, f, box, n, refine, trial, trial_ratio,
                                 symmetry_check=self_adjoint, heldout=held)
        hq = (box.xmax - box.xmin) / (n * trial_ratio * refine)
        rep.rows.append({"n": n, "H": (box.xmax - box.xmin) / n, "h_quad": hq,
                         **sol.to_dict()})
    res = rep.column("pairing_residual")
    rep.checks["heldout_halves"] = bool(np.all(res[1:] <= 0.5 * res[:-1]))
    zero = distribution_solve(spec, 0.0, box, bases[0], refine, trial, trial_ratio,
                              heldout=held)
    rep.info["zero_rhs_norm"] = float(np.linalg.norm(zero.u.values))
    rep.checks["zero_rhs_gives_zero"] = rep.info["zero_rhs_norm"] <= 1e-10
    train = rep.column("training_residual")
    rep.info["heldout_within_3x_training"] = bool(np.all(res <= 3.0 * train))
    if self_adjoint:
        asym, hq = rep.column("asymmetry"), rep.column("h_quad")
        rep.info["asymmetry_orders"] = observed_orders(hq, asym)
        rep.checks["asymmetry_second_order"] = min(rep.info["asymmetry_orders"]) >= 1.8
    return rep
