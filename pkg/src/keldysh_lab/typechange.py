"""Type-change functions K(x) for equations of Keldysh type.

A type-change function satisfies K(0) = 0 and x K(x) > 0 for x != 0, so the
equation is elliptic for x > 0 and hyperbolic for x < 0.  Instances carry
vectorized closures for K, K' and K''.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .errors import InvalidParameter

ArrayFn = Callable[[np.ndarray], np.ndarray]

#: tolerance for the K(0) = 0 check on user closures
ZERO_TOL = 1e-12


class Regularity(str, Enum):
    C2 = "C2"
    C1 = "C1"
    PIECEWISE_CONSTANT = "piecewise-constant"


@dataclass(frozen=True)
class TypeChangeFn:
    """K(x) together with its first two derivatives.

    ``undefined_at`` lists points where ``deriv1``/``deriv2`` are not defined;
    the closures return NaN there.  Consumers that need K' on each open
    half-line should call :meth:`deriv1_halfline`, which maps those points to 0.
    """

    eval: ArrayFn
    deriv1: ArrayFn
    deriv2: ArrayFn
    regularity: Regularity = Regularity.C2
    monotone_hyperbolic: bool = True
    name: str = "K"
    undefined_at: tuple[float, ...] = field(default=())

    def __call__(self, x):
        return self.eval(np.asarray(x, dtype=float))

    @property
    def is_c1(self) -> bool:
        return self.regularity in (Regularity.C1, Regularity.C2)

    def deriv1_halfline(self, x) -> np.ndarray:
        d = np.asarray(self.deriv1(np.asarray(x, dtype=float)), dtype=float)
        return np.where(np.isnan(d), 0.0, d)

    def deriv2_halfline(self, x) -> np.ndarray:
        d = np.asarray(self.deriv2(np.asarray(x, dtype=float)), dtype=float)
        return np.where(np.isnan(d), 0.0, d)

    def to_dict(self) -> dict:
        return {"name": self.name, "regularity": self.regularity.value,
                "monotone_hyperbolic": self.monotone_hyperbolic}


def make_power(k0: int) -> TypeChangeFn:
    """K(x) = x**(2*k0 - 1) with exact derivatives."""
    if int(k0) != k0 or k0 < 1:
        raise InvalidParameter(f"k0 must be a positive integer, got {k0!r}")
    p = 2 * int(k0) - 1

    def ev(x):
        x = np.asarray(x, dtype=float)
        return x**p

    def d1(x):
        x = np.asarray(x, dtype=float)
        return p * x ** (p - 1) if p > 1 else np.ones_like(x)

    def d2(x):
        x = np.asarray(x, dtype=float)
        if p == 1:
            return np.zeros_like(x)
        return p * (p - 1) * x ** (p - 2)

    name = "x" if p == 1 else f"x^{p}"
    return TypeChangeFn(ev, d1, d2, Regularity.C2, True, name)


def make_sgn() -> TypeChangeFn:
    """K(x) = sgn(x); K' is 0 off the sonic line and undefined on it."""

    def ev(x):
        return np.sign(np.asarray(x, dtype=float))

    def d(x):
        x = np.asarray(x, dtype=float)
        return np.where(x == 0.0, np.nan, 0.0)

    return TypeChangeFn(ev, d, d, Regularity.PIECEWISE_CONSTANT, True, "sgn", (0.0,))


def from_callables(eval: ArrayFn, deriv1: ArrayFn, deriv2: ArrayFn, *,
                   regularity: Regularity | str = Regularity.C2,
                   monotone_hyperbolic: bool = True, name: str = "K") -> TypeChangeFn:
    """Wrap user closures; admissibility is checked by :func:`validate`, not here."""
    return TypeChangeFn(eval, deriv1, deriv2, Regularity(regularity),
                        monotone_hyperbolic, name)


def from_spec(kind: str, k0: int = 1) -> TypeChangeFn:
    """Build from a short tag: ``power`` (with k0) or ``sgn``."""
    if kind == "power":
        return make_power(k0)
    if kind == "sgn":
        return make_sgn()
    raise InvalidParameter(f"unknown type-change kind {kind!r}")


def parse_tag(tag: str) -> TypeChangeFn:
    """Parse CLI tags like ``power:1``, ``power:2`` or ``sgn``."""
    kind, _, arg = tag.partition(":")
    if kind == "power":
        try:
            return make_power(int(arg or 1))
        except ValueError as exc:
            raise InvalidParameter(f"bad power exponent in {tag!r}") from exc
    return from_spec(kind)


@dataclass
class Violation:
    condition: str
    x: float
    detail: str = ""


@dataclass
class ValidationReport:
    violations: list[Violation]
    flags: list[str]

    @property
    def admissible(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "admissible": self.admissible,
            "violations": [vars(v) for v in self.violations],
            "flags": list(self.flags),
        }


def validate(K: TypeChangeFn, xmin: float, xmax: float, n: int) -> ValidationReport:
    """Check K(0) = 0, x K(x) > 0 and hyperbolic monotonicity by sampling.

    Monotonicity and regularity problems are reported as flags only; they do
    not make K inadmissible.
    """
    if not xmin < 0.0 < xmax:
        raise InvalidParameter("validate needs xmin < 0 < xmax")
    if n < 3:
        raise InvalidParameter("validate needs at least 3 samples")
    xs = np.union1d(np.linspace(xmin, xmax, int(n)), [0.0])
    ks = np.asarray(K(xs), dtype=float)
    violations: list[Violation] = []
    flags: list[str] = []

    k0 = float(K(np.array([0.0]))[0])
    if not abs(k0) <= ZERO_TOL:
        violations.append(Violation("cond1", 0.0, f"K(0) = {k0!r}"))

    nz = xs != 0.0
    bad = nz & ~(xs * ks > 0.0)
    for x in xs[bad]:
        violations.append(Violation("cond2", float(x), "x*K(x) <= 0"))

    neg = xs < 0.0
    drops = np.flatnonzero(np.diff(ks[neg]) < 0.0)
    if drops.size:
        where = float(xs[neg][drops[0] + 1])
        flags.append(f"not monotone on x<0 (first decrease at x={where:.6g})")
        if K.monotone_hyperbolic:
            flags.append("declared monotone_hyperbolic but sampling disagrees")

    if not K.is_c1:
        flags.append("not C1 at x=0; K' undefined on the sonic line")
    return ValidationReport(violations, flags)
