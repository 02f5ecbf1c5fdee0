"""Discrete Keldysh-type operators and the first-order multiplier.

All operators are second-order finite-difference realisations of

    L_(K;k) u = K(x) u_xx + k K'(x) u_x + u_yy

with two special forms: ``loword`` (k = 1/2) and ``kappa`` (K = x with a
constant coefficient kappa in place of k K').
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter
from .grid import GridField, diff
from .typechange import TypeChangeFn, make_power

FORMS = ("loword", "kappa", "general")


@dataclass(frozen=True)
class OperatorSpec:
    K: TypeChangeFn
    k: float = 0.5
    form: str = "loword"
    kappa: float | None = None

    def __post_init__(self):
        if self.form not in FORMS:
            raise InvalidParameter(f"unknown operator form {self.form!r}")
        if self.form == "loword" and self.k != 0.5:
            raise InvalidParameter("the loword form has k = 1/2")
        if self.form == "kappa":
            if self.kappa is None or not 0.0 <= self.kappa <= 1.5:
                raise InvalidParameter("kappa must lie in [0, 3/2]")
            if self.K.name != "x":
                raise InvalidParameter("the kappa form needs K(x) = x")

    def first_order_coefficient(self, X: np.ndarray) -> np.ndarray:
        """Coefficient of u_x; NaN where K' is undefined and needed."""
        if self.form == "kappa":
            return np.full_like(X, float(self.kappa))
        if self.k == 0.0:
            return np.zeros_like(X)
        return self.k * np.asarray(self.K.deriv1(X), dtype=float)

    def to_dict(self) -> dict:
        return {"K": self.K.name, "k": self.k, "form": self.form, "kappa": self.kappa}


def loword(K: TypeChangeFn) -> OperatorSpec:
    return OperatorSpec(K, 0.5, "loword")


def kappa_form(kappa: float) -> OperatorSpec:
    return OperatorSpec(make_power(1), 0.0, "kappa", float(kappa))


def general(K: TypeChangeFn, k: float) -> OperatorSpec:
    return OperatorSpec(K, float(k), "general")


def apply(spec: OperatorSpec, u: GridField) -> GridField:
    """K u_xx + coeff u_x + u_yy at every node with usable stencils.

    Nodes where K' is undefined (sgn on the sonic line) come back invalid.
    """
    X = u.grid.mesh[0]
    Kx = np.asarray(spec.K(X), dtype=float)
    coef = spec.first_order_coefficient(X)
    uxx, ux, uyy = diff(u, "xx"), diff(u, "x"), diff(u, "yy")
    with np.errstate(invalid="ignore"):
        vals = Kx * uxx.values + coef * ux.values + uyy.values
    return GridField(u.grid, vals, uxx.valid & ux.valid & uyy.valid & np.isfinite(coef))


def apply_adjoint(kappa: float, u: GridField) -> GridField:
    """Formal adjoint of L_kappa, i.e. the kappa form with 2 - kappa."""
    if not 0.0 <= kappa <= 1.5:
        raise InvalidParameter("kappa must lie in [0, 3/2]")
    X = u.grid.mesh[0]
    uxx, ux, uyy = diff(u, "xx"), diff(u, "x"), diff(u, "yy")
    vals = X * uxx.values + (2.0 - kappa) * ux.values + uyy.values
    return GridField(u.grid, vals, uxx.valid & ux.valid & uyy.valid)


def apply_multiplier(ms, u: GridField, side: str | None = None) -> GridField:
    """a u + b u_x + c u_y.

    ``b`` is evaluated branch by branch; ``side`` forces one branch everywhere,
    which is what per-side quadrature over a cut domain needs.
    """
    X, Y = u.grid.mesh
    ux, uy = diff(u, "x"), diff(u, "y")
    b = ms.b(X, Y, side)
    c = ms.c(Y)
    vals = ms.a * u.values + b * ux.values + c * uy.values
    return GridField(u.grid, vals, u.valid & ux.valid & uy.valid)


def divergence_identity_residual(K: TypeChangeFn, u: GridField) -> GridField:
    """d_y(-2 u_x u_y) - d_x(K u_x^2 - u_y^2) + 2 u_x L u, which vanishes for any u."""
    X = u.grid.mesh[0]
    ux, uy = diff(u, "x"), diff(u, "y")
    Kx = u.grid.field(K(X))
    lu = apply(loword(K), u)
    return diff(-2.0 * ux * uy, "y") - diff(Kx * ux * ux - uy * uy, "x") + 2.0 * ux * lu
