"""Continuous and discrete Frechet distance between trajectories.

``decide`` is the free-space decision procedure. ``distance_exact`` either
binary-searches the sorted critical values with it (exact up to floating
point) or bisects between a lower and an upper bound to a given width.
"""
from __future__ import annotations

import numpy as np

from . import _kernels as K
from .errors import DimensionMismatch
from .geometry import Trajectory

CRITICAL = "critical-values"
BISECTION = "bisection"
# above this many free-space cells the cubic candidate enumeration is skipped
CRITICAL_CELL_LIMIT = 10_000
DEFAULT_REL_TOL = 1e-9


def _arrays(P, Q):
    a = P.vertices if isinstance(P, Trajectory) else np.asarray(P, dtype=np.float64)
    b = Q.vertices if isinstance(Q, Trajectory) else np.asarray(Q, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"dimension {a.shape[1]} vs {b.shape[1]}")
    return a, b


def decide(P, Q, eps: float) -> bool:
    """True iff the continuous Frechet distance of P and Q is at most eps."""
    if eps < 0:
        return False
    a, b = _arrays(P, Q)
    return bool(K.decide(a, b, float(eps)))


def discrete_frechet(P, Q) -> float:
    a, b = _arrays(P, Q)
    return float(K.discrete_frechet(a, b))


def default_mode(P, Q) -> str:
    a, b = _arrays(P, Q)
    return CRITICAL if a.shape[0] * b.shape[0] <= CRITICAL_CELL_LIMIT else BISECTION


def distance_exact(P, Q, mode: str | None = None, tol: float | None = None) -> float:
    """Continuous Frechet distance.

    mode=None picks critical values for small inputs and bisection otherwise.
    In bisection mode ``tol`` is the absolute bracket width (default
    1e-9 times the upper bound) and the upper end is returned.
    """
    a, b = _arrays(P, Q)
    if mode is None:
        mode = CRITICAL if a.shape[0] * b.shape[0] <= CRITICAL_CELL_LIMIT else BISECTION
    if mode == CRITICAL:
        return _critical(a, b)
    if mode == BISECTION:
        return distance_interval(a, b, tol)[1]
    raise ValueError(f"unknown mode {mode!r}")


def _critical(a, b):
    vals = K.critical_values(a, b)
    lo = max(vals[0], vals[1])
    vals = np.unique(vals[vals >= lo])
    return float(K.search_sorted_values(a, b, vals))


def distance_interval(P, Q, tol: float | None = None) -> tuple[float, float]:
    """Bracket [lo, hi] of width <= tol with decide(hi) true."""
    from .bounds import bracket

    a, b = _arrays(P, Q)
    lo, hi = bracket(a, b)
    if tol is None:
        tol = DEFAULT_REL_TOL * hi
    tol = max(tol, 1e-300)
    while not K.decide(a, b, hi):
        hi = 2.0 * hi if hi > 0 else 1e-300
    if K.decide(a, b, lo):
        return float(lo), float(lo)
    lo, hi = K.bisect_decide(a, b, lo, hi, tol)
    return float(lo), float(hi)
