"""Piecewise regularizations of the positive part.

``alpha`` smooths the indicator ``1{r > 0}``, ``beta`` its antiderivative
(a smoothed ``max(r, 0)``) and ``gamma`` the antiderivative of ``beta``
(a smoothed ``max(r, 0)**2 / 2``).  All three accept scalars or arrays.
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RegParams:
    delta: float

    def __post_init__(self):
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise ValueError(f"delta must be positive and finite, got {self.delta!r}")


def _prepare(r, p):
    if not isinstance(p, RegParams):
        p = RegParams(float(p))
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("argument must be finite")
    return r, p.delta


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def alpha(r, p):
    """0 for r < 0, r/delta on [0, delta], 1 above."""
    r, d = _prepare(r, p)
    return _out(np.where(r > d, 1.0, np.where(r >= 0, r / d, 0.0)))


def beta(r, p):
    r, d = _prepare(r, p)
    return _out(np.where(r > d, r - d / 2, np.where(r >= 0, r * r / (2 * d), 0.0)))


def gamma(r, p):
    r, d = _prepare(r, p)
    return _out(np.where(r > d, d * d / 6 + r * r / 2 - d * r / 2,
                         np.where(r >= 0, r ** 3 / (6 * d), 0.0)))
