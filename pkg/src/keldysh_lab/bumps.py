"""Compactly supported C^3 test functions: tensor products of quartic B-splines."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

# cardinal quartic B-spline on knots 0..5 and its first two derivatives
_PROFILE = BSpline.basis_element(np.arange(6.0), extrapolate=False)
_DERIVS = (_PROFILE, _PROFILE.derivative(1), _PROFILE.derivative(2))


def profile(t, nu: int = 0) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    v = _DERIVS[nu](t.ravel()).reshape(t.shape)
    return np.nan_to_num(v, nan=0.0)


@dataclass(frozen=True)
class Bump:
    """B(x) B(y) scaled to the support [x0, x1] x [y0, y1]."""

    x0: float
    x1: float
    y0: float
    y1: float

    def __call__(self, X, Y, dx: int = 0, dy: int = 0) -> np.ndarray:
        sx = 5.0 / (self.x1 - self.x0)
        sy = 5.0 / (self.y1 - self.y0)
        px = profile(sx * (np.asarray(X) - self.x0), dx) * sx**dx
        py = profile(sy * (np.asarray(Y) - self.y0), dy) * sy**dy
        return px * py

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))


def random_bumps(box, count: int, rng: np.random.Generator,
                 width=(0.15, 0.45)) -> list[Bump]:
    """Bumps with random centres and half-widths inside ``box = (x0, x1, y0, y1)``."""
    x0, x1, y0, y1 = box
    Lx, Ly = x1 - x0, y1 - y0
    out = []
    for _ in range(count):
        wx = rng.uniform(*width) * Lx
        wy = rng.uniform(*width) * Ly
        cx = rng.uniform(x0 + wx, x1 - wx)
        cy = rng.uniform(y0 + wy, y1 - wy)
        out.append(Bump(cx - wx, cx + wx, cy - wy, cy + wy))
    return out
