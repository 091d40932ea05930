"""Per-step linear programs: min/max of one coordinate over the reduced system.

The solver is a dense two-phase primal simplex with Bland's rule, jitted with
numba so that the millions of tiny solves performed during sampling and
de-bias fitting stay cheap.  Problems are of the form

    min/max c @ x   s.t.  A x <= b,  x >= 0

with A a few hundred rows at most and x a handful of variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import NumericalFailure

_TOL = 1e-9

# solver status codes
_OPTIMAL = 0
_INFEASIBLE = 1
_UNBOUNDED = 2
_ITER_LIMIT = 3


@dataclass(frozen=True)
class CoordinateBounds:
    """Feasible interval [lo, hi] for one coordinate of a reduced system."""

    lo: float
    hi: float

    @property
    def degenerate(self) -> bool:
        return self.hi - self.lo < 1e-9

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)


@njit(cache=True)
def _pivot(T, basis, row, col):
    piv = T[row, col]
    T[row, :] /= piv
    for r in range(T.shape[0]):
        if r != row:
            f = T[r, col]
            if f != 0.0:
                T[r, :] -= f * T[row, :]
    basis[row] = col


@njit(cache=True)
def _bland_enter(obj, allowed):
    # smallest-index column with strictly negative reduced cost
    for j in range(obj.shape[0] - 1):
        if allowed[j] and obj[j] < -_TOL:
            return j
    return -1


@njit(cache=True)
def _ratio_leave(T, basis, col):
    m = T.shape[0]
    rhs = T.shape[1] - 1
    best = -1
    best_ratio = 0.0
    for i in range(m):
        a = T[i, col]
        if a > _TOL:
            r = T[i, rhs] / a
            if best == -1 or r < best_ratio - _TOL or (
                abs(r - best_ratio) <= _TOL and basis[i] < basis[best]
            ):
                best = i
                best_ratio = r
    return best


@njit(cache=True)
def _run_simplex(T, basis, obj, allowed, max_iter):
    it = 0
    while it < max_iter:
        col = _bland_enter(obj, allowed)
        if col == -1:
            return _OPTIMAL
        row = _ratio_leave(T, basis, col)
        if row == -1:
            return _UNBOUNDED
        f = obj[col]
        _pivot(T, basis, row, col)
        obj -= f * T[row, :]
        it += 1
    return _ITER_LIMIT


@njit(cache=True)
def solve_lp(A, b, c, maximize):
    """min/max c @ x s.t. A x <= b, x >= 0.

    Returns (status, objective, x).
    """
    m, n = A.shape
    max_iter = 50 * (m + n)

    # equality form: A x + sigma_i * s_i = b with b >= 0 after row flips;
    # flipped rows get sigma = -1 and need an artificial variable.
    flip = b < 0.0
    n_art = int(np.sum(flip))
    n_tot = n + m + n_art

    T = np.zeros((m, n_tot + 1))
    basis = np.empty(m, dtype=np.int64)
    ai = 0
    for i in range(m):
        if flip[i]:
            T[i, :n] = -A[i, :]
            T[i, -1] = -b[i]
            T[i, n + i] = -1.0
            T[i, n + m + ai] = 1.0
            basis[i] = n + m + ai
            ai += 1
        else:
            T[i, :n] = A[i, :]
            T[i, -1] = b[i]
            T[i, n + i] = 1.0
            basis[i] = n + i

    allowed = np.ones(n_tot, dtype=np.bool_)
    x = np.zeros(n)

    if n_art > 0:
        # phase 1: minimize the sum of artificials
        obj = np.zeros(n_tot + 1)
        for j in range(n + m, n_tot):
            obj[j] = 1.0
        for i in range(m):
            if basis[i] >= n + m:
                obj -= T[i, :]
        status = _run_simplex(T, basis, obj, allowed, max_iter)
        if status != _OPTIMAL:
            return status, 0.0, x
        if -obj[-1] > 1e-7:
            return _INFEASIBLE, 0.0, x
        # drive leftover artificials out of the basis where possible
        for i in range(m):
            if basis[i] >= n + m:
                for j in range(n + m):
                    if abs(T[i, j]) > _TOL:
                        _pivot(T, basis, i, j)
                        break
        for j in range(n + m, n_tot):
            allowed[j] = False

    # phase 2
    sign = -1.0 if maximize else 1.0
    obj = np.zeros(n_tot + 1)
    for j in range(n):
        obj[j] = sign * c[j]
    for i in range(m):
        bj = basis[i]
        if bj < n and obj[bj] != 0.0:
            obj -= obj[bj] * T[i, :]
    status = _run_simplex(T, basis, obj, allowed, max_iter)
    if status != _OPTIMAL:
        return status, 0.0, x

    for i in range(m):
        if basis[i] < n:
            x[basis[i]] = T[i, -1]
    return _OPTIMAL, float(np.dot(c, x)), x


@njit(cache=True)
def _coord_bounds(A, b, coord):
    """(status, lo, hi) for variable `coord` over {A x <= b, x >= 0}."""
    n = A.shape[1]
    c = np.zeros(n)
    c[coord] = 1.0
    status, lo, _ = solve_lp(A, b, c, False)
    if status != _OPTIMAL:
        return status, 0.0, 0.0
    status, hi, _ = solve_lp(A, b, c, True)
    if status != _OPTIMAL:
        return status, 0.0, 0.0
    return _OPTIMAL, lo, hi


@njit(cache=True)
def _bounds_batch(A, B, coord):
    """First-coordinate bounds for many right-hand sides sharing one matrix.

    A: m x d constraint slice, B: k x m per-sample limits.  Returns
    (status k, lo k, hi k).
    """
    k = B.shape[0]
    status = np.empty(k, dtype=np.int64)
    lo = np.empty(k)
    hi = np.empty(k)
    for j in range(k):
        s, l, h = _coord_bounds(A, B[j], coord)
        status[j] = s
        lo[j] = l
        hi[j] = h
    return status, lo, hi


def _clamp_bounds(lo: float, hi: float) -> CoordinateBounds:
    lo = min(max(lo, 0.0), 1.0)
    hi = min(max(hi, 0.0), 1.0)
    if hi < lo:  # floating overshoot
        lo = hi = 0.5 * (lo + hi)
    if hi - lo < 1e-9:
        mid = 0.5 * (lo + hi)
        return CoordinateBounds(mid, mid)
    return CoordinateBounds(lo, hi)


def bounds(system, i: int | None = None) -> CoordinateBounds:
    """Feasible interval for coordinate ``i`` of a reduced system.

    ``i`` is an absolute entity index (>= system.start); defaults to the
    first unfixed coordinate.  Bounds are clamped into [0, 1].
    """
    if i is None:
        i = system.start
    if i < system.start:
        raise ValueError(f"coordinate {i} already fixed (start={system.start})")
    A = system.live_coeffs()
    b = system.live_limits
    status, lo, hi = _coord_bounds(A, b, i - system.start)
    if status != _OPTIMAL:
        raise NumericalFailure(f"LP solver status {status} for coordinate {i}")
    return _clamp_bounds(lo, hi)


def feasible(system) -> bool:
    """True iff the reduced system admits a point (phase-1 feasibility)."""
    A = system.live_coeffs()
    b = system.live_limits
    n = A.shape[1]
    status, _, _ = solve_lp(A, b, np.zeros(n), False)
    if status == _ITER_LIMIT:
        raise NumericalFailure("simplex iteration cap reached in feasibility check")
    return status == _OPTIMAL


def solve(A, b, c, maximize=False):
    """Generic LP access (used by tests): returns (objective, x)."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    status, obj, x = solve_lp(A, b, c, maximize)
    if status == _INFEASIBLE:
        raise NumericalFailure("infeasible system")
    if status != _OPTIMAL:
        raise NumericalFailure(f"solver status {status}")
    return obj, x
