"""Bisection for strictly decreasing functions of the dimension parameter."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class BracketError(RuntimeError):
    """No sign change could be found for a root."""


class MonotonicityError(RuntimeError):
    pass


@dataclass(frozen=True)
class Root:
    value: float
    below_bracket: bool = False  # f(lo) <= 0: the root is at or below lo
    iterations: int = 0


def check_decreasing(f: Callable[[float], float], lo: float, hi: float, points: int = 10) -> None:
    grid = np.linspace(lo, hi, points)
    vals = np.array([f(x) for x in grid])
    finite = np.isfinite(vals)
    if np.any(np.diff(vals[finite]) > 1e-12 * (1 + np.abs(vals[finite][:-1]))):
        raise MonotonicityError(f"objective is not decreasing on [{lo}, {hi}]: {vals}")


def bisect_decreasing(
    f: Callable[[float], float],
    lo: float = 0.0,
    hi: float = 2.0,
    tol: float = 1e-10,
    max_hi: float = 64.0,
    check: bool = True,
) -> Root:
    """Root of a strictly decreasing ``f``.

    If ``f(lo) <= 0`` the root lies at or below ``lo`` and ``lo`` is returned
    flagged.  The upper end is doubled until ``f(hi) <= 0``.
    """
    flo = f(lo)
    if flo <= 0:
        return Root(lo, below_bracket=True)
    fhi = f(hi)
    while fhi > 0:
        if hi >= max_hi:
            raise BracketError(f"objective still positive at s={hi}")
        lo, hi = hi, 2 * hi
        fhi = f(hi)
    if check:
        check_decreasing(f, lo, hi)
    it = 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
        it += 1
    return Root(0.5 * (lo + hi), iterations=it)

