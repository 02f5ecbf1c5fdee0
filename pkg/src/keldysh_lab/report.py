"""Refinement-ladder reports shared by the experiments and the CLI."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def observed_orders(h, err) -> list[float]:
    """log(e_i / e_{i+1}) / log(h_i / h_{i+1}) for consecutive ladder entries."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    out = []
    for i in range(h.size - 1):
        if err[i + 1] == 0.0:
            out.append(math.inf if err[i] > 0.0 else 0.0)
        elif err[i] == 0.0:
            out.append(-math.inf)
        else:
            out.append(float(math.log(err[i] / err[i + 1]) / math.log(h[i] / h[i + 1])))
    return out


def _plain(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


@dataclass
class LadderReport:
    """One row per grid plus named pass/fail checks."""

    experiment: str
    rows: list[dict] = field(default_factory=list)
    checks: dict[str, bool] = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def column(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.rows], dtype=float)

    def to_dict(self) -> dict:
        return _plain({"experiment": self.experiment, "passed": self.passed,
                       "checks": self.checks, "rows": self.rows, "info": self.info})
