"""The abc energy method: multiplier, integration-by-parts coefficients,
identity and inequality checks, and weighted Poincare constants.

The multiplier is M u = a u + b u_x + c u_y with a = -1, c = 2(2 delta - 1) y and

    b = exp(2 delta x / Q1) + (2 delta - 1)(1 - kappa) y^2     (x >= 0)
    b = exp(3 delta x / Q2) + (2 delta - 1)(1 - kappa) y^2     (x <  0)

where Q1 = exp(2 delta mu1), Q2 = exp(mu2), mu1 = max x and mu2 = min x.
b has a kink on x = 0, so every quadrature here is split along that line and
each side uses the smooth extension of its own branch.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, eigh
from scipy.ndimage import binary_dilation

from .bumps import random_bumps
from .errors import InvalidInput, InvalidParameter
from .geometry import Rectangle, Region
from .grid import (Grid, GridField, Node, area_weights, diff, integrate_area, make_grid,
                   outward_flux)
from .operators import apply, apply_adjoint, general
from .typechange import TypeChangeFn, make_power

MAX_SHRINKS = 40


# ------------------------------------------------------------- multipliers

@dataclass(frozen=True)
class ConstantMultiplier:
    """a u + b0 u_x + c0 u_y with constant coefficients (handy for checks)."""

    a: float = -1.0
    b0: float = 0.0
    c0: float = 0.0

    def b(self, X, Y, side=None):
        return np.full(np.broadcast(X, Y).shape, self.b0)

    def bx(self, X, Y, side=None):
        return np.zeros(np.broadcast(X, Y).shape)

    def by(self, X, Y):
        return np.zeros(np.broadcast(X, Y).shape)

    def c(self, Y):
        return np.full(np.shape(Y), self.c0)

    def cy(self, Y):
        return np.zeros(np.shape(Y))


@dataclass(frozen=True)
class MultiplierSpec:
    delta: float
    kappa: float
    mu1: float
    mu2: float
    eps: float = math.nan
    delta_requested: float = math.nan
    shrinks: int = 0
    a: float = -1.0

    @property
    def Q1(self) -> float:
        return math.exp(2.0 * self.delta * self.mu1)

    @property
    def Q2(self) -> float:
        return math.exp(self.mu2)

    @property
    def delta_prime(self) -> float:
        return min(self.delta, self.eps)

    def _plus(self, X, side):
        if side is None:
            return np.asarray(X) >= 0.0
        return np.full(np.shape(X), side == "plus")

    def b1(self, X, side=None):
        X = np.asarray(X, dtype=float)
        d = self.delta
        with np.errstate(over="ignore"):
            return np.where(self._plus(X, side), np.exp(2 * d * X / self.Q1),
                            np.exp(3 * d * X / self.Q2))

    def b2(self, Y):
        return (2 * self.delta - 1) * (1 - self.kappa) * np.asarray(Y, dtype=float) ** 2

    def b(self, X, Y, side=None):
        return self.b1(X, side) + self.b2(Y)

    def bx(self, X, Y, side=None):
        X = np.asarray(X, dtype=float)
        d = self.delta
        gx = np.where(self._plus(X, side), 2 * d / self.Q1 * np.exp(2 * d * X / self.Q1),
                      3 * d / self.Q2 * np.exp(3 * d * X / self.Q2))
        return np.broadcast_to(gx, np.broadcast(X, Y).shape)

    def by(self, X, Y):
        gy = 2 * (2 * self.delta - 1) * (1 - self.kappa) * np.asarray(Y, dtype=float)
        return np.broadcast_to(gy, np.broadcast(X, Y).shape)

    def c(self, Y):
        return 2 * (2 * self.delta - 1) * np.asarray(Y, dtype=float)

    def cy(self, Y):
        return np.full(np.shape(Y), 2 * (2 * self.delta - 1))

    def gamma_bounds(self, X):
        """The two closed-form lower-bound expressions for gamma on each side."""
        b1 = self.b1(X)
        g_plus = 2 + self.delta * (b1 / self.Q1 - 2)
        g_minus = 2 + self.delta * (1.5 * b1 / self.Q2 - 2)
        return np.where(np.asarray(X) >= 0.0, g_plus, g_minus)

    def to_dict(self) -> dict:
        return {"a": self.a, "delta": self.delta, "kappa": self.kappa, "mu1": self.mu1,
                "mu2": self.mu2, "Q1": self.Q1, "Q2": self.Q2, "eps": self.eps,
                "delta_prime": self.delta_prime, "delta_requested": self.delta_requested,
                "shrinks": self.shrinks}


# ------------------------------------------------------- IBP coefficients

@dataclass(frozen=True)
class IbpCoefficients:
    """omega, alpha, beta, gamma of the identity (M u, L_(K;k) u) = flux + area form."""

    K: TypeChangeFn
    k: float
    coeffs: object

    def _Kd(self, X):
        X = np.asarray(X, dtype=float)
        return (np.asarray(self.K(X), dtype=float), np.asarray(self.K.deriv1(X), dtype=float),
                np.asarray(self.K.deriv2(X), dtype=float))

    @staticmethod
    def _times(coef, val):
        # 0 * undefined counts as 0: terms with a vanishing factor are absent
        with np.errstate(invalid="ignore"):
            return np.where(coef == 0.0, 0.0, coef * val)

    def omega(self, X, Y, side=None):
        _, _, K2 = self._Kd(X)
        coef = np.full(np.broadcast(X, Y).shape, (1 - self.k) * self.coeffs.a / 2)
        return self._times(coef, K2)

    def alpha(self, X, Y, side=None):
        K0, K1, _ = self._Kd(X)
        m = self.coeffs
        first = (m.cy(Y) / 2 - (m.a + m.bx(X, Y, side) / 2)) * K0
        return first + self._times(m.b(X, Y, side) * (self.k - 0.5), K1)

    def beta(self, X, Y, side=None):
        _, K1, _ = self._Kd(X)
        m = self.coeffs
        return 0.5 * (self._times(m.c(Y) * (self.k - 1), K1) - m.by(X, Y))

    def gamma(self, X, Y, side=None):
        m = self.coeffs
        return 0.5 * (m.bx(X, Y, side) - m.cy(Y)) - m.a

    def flagged(self, X, Y) -> np.ndarray:
        """Nodes where a needed K' or K'' is undefined."""
        vals = [self.omega(X, Y), self.alpha(X, Y), self.beta(X, Y)]
        return ~np.all([np.isfinite(v) for v in vals], axis=0)


def ibp_coefficients(K: TypeChangeFn, k: float, coeffs) -> IbpCoefficients:
    return IbpCoefficients(K, float(k), coeffs)


# ----------------------------------------------- multiplier certificates

def _certificate_margins(ms: MultiplierSpec, X: np.ndarray, Y: np.ndarray) -> dict:
    co = ibp_coefficients(make_power(1), 2.0 - ms.kappa, ms)
    plus = X >= 0.0
    out = {
        "alpha_margin": float(np.min(co.alpha(X, Y) - ms.delta * np.abs(X))),
        "gamma_margin": float(np.min(co.gamma(X, Y) - ms.eps)) if math.isfinite(ms.eps) else math.nan,
        "beta_max": float(np.max(np.abs(co.beta(X, Y)))),
        "b_min": float(np.min(ms.b(X, Y))),
        "b1_plus_max_minus_Q1": float(np.max(ms.b1(X[plus]) - ms.Q1)) if plus.any() else -math.inf,
        "b1_minus_min_minus_Q2": float(np.min(ms.b1(X[~plus]) - ms.Q2)) if (~plus).any() else math.inf,
        "three_delta_below_Q2": bool(3 * ms.delta < ms.Q2),
    }
    # alpha's minimum on the plus side at x = 0 is exactly 0 when kappa = 3/2;
    # also check in the other side's limit (x -> 0-) with the minus branch
    if (X == 0.0).any():
        Z, Yz = X[X == 0.0], Y[X == 0.0]
        am = co.alpha(Z, Yz, "minus")
        out["alpha_margin"] = min(out["alpha_margin"], float(np.min(am)))
    return out


def certificates(ms: MultiplierSpec, grid: Grid, tol: float = 1e-12) -> dict:
    """Node-wise bound checks for the multiplier over a grid's region nodes."""
    X, Y = grid.mesh
    sel = grid.inside
    m = _certificate_margins(ms, X[sel], Y[sel])
    m["pass"] = bool(m["alpha_margin"] >= -tol and m["gamma_margin"] >= -tol
                     and m["beta_max"] <= tol and m["b_min"] > 0.0
                     and m["b1_plus_max_minus_Q1"] <= tol and m["b1_minus_min_minus_Q2"] > 0.0
                     and m["three_delta_below_Q2"])
    return m


def _region_samples(region: Region, n: int = 201):
    xs = np.union1d(np.linspace(region.xmin, region.xmax, n), [0.0])
    ys = np.union1d(np.linspace(region.ymin, region.ymax, n), [0.0])
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    keep = region.contains(X, Y, tol=1e-12)
    return X[keep], Y[keep]


def make_multiplier(dom: Region, kappa: float, delta: float | None = None,
                    samples: int = 201) -> MultiplierSpec:
    """Multiplier for L*_kappa on ``dom``, halving delta until the bounds hold.

    delta starts at the requested value (0.25 when None) and is halved, at
    most 40 times, until 3 delta < Q2, the gamma lower bound eps is positive
    and alpha >= delta |x| on a sample of the region.
    """
    if not 1.0 <= kappa <= 1.5:
        raise InvalidParameter("kappa must lie in [1, 3/2]")
    d0 = 0.25 if delta is None else float(delta)
    if not d0 > 0.0:
        raise InvalidParameter("delta must be positive")
    mu1, mu2 = float(dom.xmax), float(min(dom.xmin, 0.0))
    X, Y = _region_samples(dom, samples)
    Xe = np.concatenate([X, [mu2, 0.0, mu1]])
    Ye = np.concatenate([Y, [0.0, 0.0, 0.0]])
    d = d0
    for shrink in range(MAX_SHRINKS + 1):
        trial = MultiplierSpec(d, kappa, mu1, mu2, math.nan, d0, shrink)
        eps = float(np.min(trial.gamma_bounds(Xe)))
        ms = MultiplierSpec(d, kappa, mu1, mu2, eps, d0, shrink)
        if d < 0.5 and 3 * d < ms.Q2 and eps > 0.0:
            m = _certificate_margins(ms, Xe, Ye)
            if m["alpha_margin"] >= 0.0 and m["b_min"] > 0.0:
                return ms
        d *= 0.5
    raise InvalidParameter(f"no admissible delta after {MAX_SHRINKS} halvings")


# ------------------------------------------------------------- reports

@dataclass
class EnergyReport:
    lhs: float = 0.0
    rhs: float = 0.0
    gap: float = 0.0
    links: list = field(default_factory=list)
    constant: float = math.nan
    grid: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    passed: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=float)


def _parts(grid: Grid):
    r = grid.region
    if r.xmin < 0.0 < r.xmax:
        return (("omega_plus", "plus"), ("omega_minus", "minus"))
    return (("all", "plus" if r.xmin >= 0.0 else "minus"),)


# ------------------------------------------------------------ weighted norms

def weighted_seminorm_sq(K: TypeChangeFn, u: GridField, part: str = "all") -> float:
    """Integral of |K| u_x^2 + u_y^2."""
    X = u.grid.mesh[0]
    ux, uy = diff(u, "x"), diff(u, "y")
    absK = u.grid.field(np.abs(K(X)))
    return integrate_area(absK * ux * ux + uy * uy, part, estimate=False).value


def h10_norm(K: TypeChangeFn, u: GridField) -> float:
    """Weighted H^1_0 norm: the seminorm alone."""
    return math.sqrt(max(weighted_seminorm_sq(K, u), 0.0))


def h1_norm(K: TypeChangeFn, u: GridField) -> float:
    """Weighted H^1 norm: L^2 part plus the same seminorm."""
    l2 = integrate_area(u * u, estimate=False).value
    return math.sqrt(max(l2 + weighted_seminorm_sq(K, u), 0.0))


# -------------------------------------------------------------- identity

def ibp_terms(K: TypeChangeFn, k: float, coeffs, u: GridField) -> dict:
    """Both sides of the integration-by-parts identity, split along x = 0."""
    g = u.grid
    X, Y = g.mesh
    Kx, K1 = np.asarray(K(X), dtype=float), np.asarray(K.deriv1(X), dtype=float)
    co = ibp_coefficients(K, k, coeffs)
    ux, uy = diff(u, "x"), diff(u, "y")
    lu = apply(general(K, k), u)
    a = coeffs.a
    cY = coeffs.c(Y)
    fK = g.field(Kx)
    with np.errstate(invalid="ignore"):
        K1f = g.field(np.where(np.isfinite(K1), K1, np.nan))
    out = {"lhs": 0.0, "boundary": 0.0, "area": 0.0, "beta_term": 0.0}
    for part, side in _parts(g):
        bS = g.field(coeffs.b(X, Y, side))
        cF = g.field(cY)
        mu = a * u + bS * ux + cF * uy
        out["lhs"] += integrate_area(mu * lu, part, estimate=False).value
        om = g.field(co.omega(X, Y, side))
        al = g.field(co.alpha(X, Y, side))
        be = g.field(co.beta(X, Y, side))
        ga = g.field(co.gamma(X, Y, side))
        out["area"] += integrate_area(om * u * u + al * ux * ux + 2.0 * be * ux * uy
                                      + ga * uy * uy, part, estimate=False).value
        out["beta_term"] += integrate_area(2.0 * be * ux * uy, part, estimate=False).value
        # flux whose divergence is M u L u minus the quadratic form
        F1 = (a * u * fK * ux - (a / 2) * u * u * K1f + (a * k / 2) * K1f * u * u
              + 0.5 * bS * fK * ux * ux - 0.5 * bS * uy * uy + cF * fK * ux * uy)
        F2 = a * u * uy + bS * ux * uy - 0.5 * cF * fK * ux * ux + 0.5 * cF * uy * uy
        out["boundary"] += outward_flux(F1, F2, part, estimate=False).value
    out["rhs"] = out["boundary"] + out["area"]
    out["gap"] = abs(out["lhs"] - out["rhs"])
    return out


def verify_ibp(K: TypeChangeFn, k: float, coeffs, u: GridField) -> EnergyReport:
    """Compare (M u, L u) with the boundary flux plus the quadratic area form."""
    t = ibp_terms(K, k, coeffs, u)
    return EnergyReport(lhs=t["lhs"], rhs=t["rhs"], gap=t["gap"], grid=u.grid.to_dict(),
                        extra={"boundary": t["boundary"], "area": t["area"],
                               "beta_term": t["beta_term"]})


# ------------------------------------------------------------ inequality

def _require_compact(u: GridField, band: int = 2) -> None:
    g = u.grid
    interior = g.inside & (g.mask != Node.BOUNDARY)
    near = binary_dilation(~interior, iterations=band)
    scale = max(1.0, float(np.max(np.abs(u.values))))
    if np.max(np.abs(u.values[near]), initial=0.0) > 1e-12 * scale:
        raise InvalidInput("u does not vanish near the boundary")


def energy_inequality_check(kappa: float, delta: float | None, u: GridField,
                            rtol: float = 1e-8) -> EnergyReport:
    """Chain delta' |u|^2 <= (M u, L*_kappa u) <= ||M u|| ||L*_kappa u||."""
    _require_compact(u)
    g = u.grid
    ms = make_multiplier(g.region, kappa, delta)
    X, Y = g.mesh
    ux, uy = diff(u, "x"), diff(u, "y")
    lsu = apply_adjoint(kappa, u)
    K = make_power(1)
    semi = weighted_seminorm_sq(K, u)
    link1 = ms.delta_prime * semi
    link2, mu_sq = 0.0, 0.0
    for part, side in _parts(g):
        mu = ms.a * u + g.field(ms.b(X, Y, side)) * ux + g.field(ms.c(Y)) * uy
        link2 += integrate_area(mu * lsu, part, estimate=False).value
        mu_sq += integrate_area(mu * mu, part, estimate=False).value
    ls_norm = math.sqrt(max(integrate_area(lsu * lsu, estimate=False).value, 0.0))
    link3 = math.sqrt(max(mu_sq, 0.0)) * ls_norm
    ok = (link1 <= link2 + rtol * abs(link2)) and (link2 <= link3 + rtol * abs(link3))
    const = math.sqrt(max(semi, 0.0)) / ls_norm if ls_norm > 0.0 else 0.0
    return EnergyReport(lhs=link1, rhs=link2, gap=link2 - link1, links=[link1, link2, link3],
                        constant=const, grid=g.to_dict(), passed=bool(ok),
                        extra={"multiplier": ms.to_dict(), "seminorm_sq": semi})


# -------------------------------------------------------------- Poincare

def poincare_ratio(K: TypeChangeFn, u: GridField) -> float:
    semi = weighted_seminorm_sq(K, u)
    return integrate_area(u * u, estimate=False).value / semi


def poincare_constant(K: TypeChangeFn, omega: Rectangle, trials: int = 24, n: int = 65,
                      seed: int = 42) -> float:
    """Lower estimate of the best weighted Poincare constant on a rectangle.

    Maximises |u|^2 / |u|_K^2 over all linear combinations of ``trials``
    seeded random bumps (a generalized symmetric eigenproblem), using exact
    bump derivatives and the grid's area quadrature.
    """
    if trials < 1:
        raise InvalidParameter("trials must be at least 1")
    if not isinstance(omega, Rectangle):
        omega = Rectangle(*omega)
    g = make_grid(omega, n)
    X, Y = g.mesh
    W = area_weights(g, np.ones(g.shape, dtype=bool)).ravel()
    absK = np.abs(np.asarray(K(X), dtype=float)).ravel()
    rng = np.random.default_rng(seed)
    bumps = random_bumps((omega.xmin, omega.xmax, omega.ymin, omega.ymax), trials, rng)
    P = np.stack([b(X, Y).ravel() for b in bumps], axis=1)
    Px = np.stack([b(X, Y, dx=1).ravel() for b in bumps], axis=1)
    Py = np.stack([b(X, Y, dy=1).ravel() for b in bumps], axis=1)
    M = P.T @ (W[:, None] * P)
    S = Px.T @ ((W * absK)[:, None] * Px) + Py.T @ (W[:, None] * Py)
    M, S = 0.5 * (M + M.T), 0.5 * (S + S.T)
    try:
        vals = eigh(M, S, eigvals_only=True)
    except LinAlgError as exc:
        raise InvalidParameter(f"grid n={n} is too coarse to resolve the trial bumps") from exc
    return float(vals[-1])
