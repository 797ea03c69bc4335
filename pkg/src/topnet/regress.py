"""Window schedules and last-point moving polynomial regression.

A curve bundle is defined by a schedule of window lengths. For each window
length n and regression order D, the curve value at bar t is the value at
the last abscissa of the degree-D least-squares fit over the trailing n
points. Only that last point is kept; the window then slides by one.

The rolling implementation never re-solves a dense system per step. Window
abscissas are mapped to the fixed grid z_j = (2j - (n-1)) / (n-1) on
[-1, 1], so the power moments T_p = sum_j z_j^p * y_j evolve by a constant
lower-triangular shift: drop the point at z = -1, translate the remaining
points by -2/(n-1) (a binomial transform of T), insert the new point at
z = +1. The fitted last-point value is a fixed linear functional c . T,
with c solved once per (n, D) from the grid's Gram matrix.

Rounding introduced at one step is carried through later shifts as a
translate operator whose entries grow like (steps * 2/(n-1))**order, so
moments are re-anchored from the raw window every min(anchor_every, n-1)
steps; that caps the accumulated translation at one window width and the
amplification at 2**order, at an amortized O(order) extra work per step.
Correctness is defined by the dense batch oracle in the test suite, not by
this update scheme.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import (
    DegenerateSystemError,
    InvalidScheduleError,
    SeriesTooShortError,
    WindowTooSmallError,
)

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap

DEFAULT_ANCHOR_EVERY = 4096

__all__ = [
    "CurveSchedule",
    "compute_schedule",
    "load_presets",
    "rolling_regression_last",
    "RollingState",
    "value_count",
    "compare_value_count",
    "DEFAULT_ANCHOR_EVERY",
]


# ---------------------------------------------------------------------------
# Window schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurveSchedule:
    """Bundle geometry: `count` windows from `shortest` to `longest` points.

    `lengths[k]` is the window length of curve rank k+1. The generating
    formula spaces lengths linearly with slope `spacing` plus a quadratic
    correction that lands exactly on `longest` at the top rank, which keeps
    the bundle density roughly uniform. `order` is the polynomial degree of
    every regression in the bundle (subtype label: TN1..TN5).
    """

    order: int
    count: int
    shortest: int
    longest: int
    spacing: float
    lengths: np.ndarray = field(repr=False)

    @property
    def label(self) -> str:
        return f"TN{self.order}"

    def params(self) -> dict:
        return {
            "order": self.order,
            "count": self.count,
            "shortest": self.shortest,
            "longest": self.longest,
            "spacing": self.spacing,
        }


def compute_schedule(order: int, count: int, shortest: int, longest: int,
                     spacing: float) -> CurveSchedule:
    """Generate and validate the window-length schedule.

    lengths_k = round(shortest + (k-1)*spacing
                      + k(k-1)/(count(count-1)) * (longest - shortest - (count-1)*spacing))

    for k = 1..count, rounded half away from zero. Raises
    InvalidScheduleError unless longest - shortest > spacing*(count-1),
    count >= 2, every length >= order+2, and the rounded sequence is
    non-decreasing.
    """
    if not 1 <= order <= 5:
        raise InvalidScheduleError(f"order must be 1..5, got {order}")
    if count < 2:
        raise InvalidScheduleError(f"need at least 2 curves, got {count}")
    leftover = longest - shortest - spacing * (count - 1)
    if leftover <= 0:
        raise InvalidScheduleError(
            f"longest - shortest must exceed spacing*(count-1): "
            f"{longest} - {shortest} <= {spacing}*({count}-1)")
    k = np.arange(1, count + 1, dtype=np.float64)
    raw = shortest + (k - 1.0) * spacing + k * (k - 1.0) / (count * (count - 1.0)) * leftover
    # all raw values are positive here, so half-away-from-zero == floor(x+0.5)
    lengths = np.floor(raw + 0.5).astype(np.int64)
    if lengths[0] != shortest or lengths[-1] != longest:
        raise InvalidScheduleError("rounded schedule misses its endpoints")
    if np.any(np.diff(lengths) < 0):
        raise InvalidScheduleError("schedule is not non-decreasing")
    if lengths[0] < order + 2:
        raise InvalidScheduleError(
            f"shortest window {lengths[0]} < order+2 = {order + 2}")
    lengths.setflags(write=False)
    return CurveSchedule(order, count, shortest, longest, float(spacing), lengths)


def load_presets() -> dict[str, CurveSchedule]:
    """Subtype presets TN1..TN5 shipped with the package (overridable)."""
    text = resources.files("topnet").joinpath("presets.json").read_text()
    out = {}
    for name, p in json.loads(text).items():
        out[name] = compute_schedule(p["order"], p["count"], p["shortest"],
                                     p["longest"], p["spacing"])
    return out


def value_count(schedule: CurveSchedule) -> int:
    """Number of series values consumed by one fully-defined bundle slice."""
    return int(schedule.lengths.sum())


def compare_value_count(schedule: CurveSchedule, expected: int) -> dict:
    """Report (never assert) how a schedule's value count compares to a
    published figure. Mismatches are expected for subtypes whose generating
    parameters are not public."""
    total = value_count(schedule)
    return {
        "schedule": schedule.params(),
        "total": total,
        "expected": int(expected),
        "difference": total - int(expected),
        "matches": total == int(expected),
    }


# ---------------------------------------------------------------------------
# Rolling last-point regression
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _moments_from_window(y, t, n, n_moments, T):
    """Direct T_p = sum_j z_j^p y[t-n+1+j] over the window ending at t."""
    base = t - n + 1
    nm1 = n - 1.0
    for j in range(n):
        z = (2.0 * j - nm1) / nm1
        v = y[base + j]
        zp = 1.0
        for p in range(n_moments):
            T[p] += zp * v
            zp *= z


@njit(cache=True, nogil=True)
def _advance(y, n, shift, c, T, steps, t_from, t_to, anchor_every, out, out_from):
    """Slide the window over t in [t_from, t_to), writing fitted values.

    `shift` is the strictly-lower-triangular part of the binomial translate
    matrix (the diagonal is 1). Returns the update count since the last
    anchor so a caller can resume bit-identically.
    """
    n_moments = T.shape[0]
    for t in range(t_from, t_to):
        y_old = y[t - n]
        sign = 1.0
        for p in range(n_moments):
            T[p] -= sign * y_old
            sign = -sign
        for p in range(n_moments - 1, 0, -1):
            acc = T[p]
            for q in range(p):
                acc += shift[p, q] * T[q]
            T[p] = acc
        y_new = y[t]
        for p in range(n_moments):
            T[p] += y_new
        steps += 1
        if steps >= anchor_every:
            for p in range(n_moments):
                T[p] = 0.0
            _moments_from_window(y, t, n, n_moments, T)
            steps = 0
        acc = 0.0
        for p in range(n_moments):
            acc += c[p] * T[p]
        out[out_from + (t - t_from)] = acc
    return steps


@lru_cache(maxsize=512)
def _functional(n: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-(n, order) constants: the moment shift matrix and the last-point
    evaluation weights c with fit(z=1) = c . T."""
    step = 2.0 / (n - 1)
    m = order + 1
    shift = np.zeros((m, m))
    for p in range(m):
        for q in range(p + 1):
            shift[p, q] = math.comb(p, q) * (-step) ** (p - q)
    j = np.arange(n, dtype=np.float64)
    z = (2.0 * j - (n - 1)) / (n - 1)
    powers = np.ones((2 * order + 1, n))
    for p in range(1, 2 * order + 1):
        powers[p] = powers[p - 1] * z
    grid_sums = powers.sum(axis=1)
    gram = np.empty((m, m))
    for p in range(m):
        for q in range(m):
            gram[p, q] = grid_sums[p + q]
    if not np.all(np.isfinite(gram)) or np.linalg.cond(gram) > 1e14:
        raise DegenerateSystemError(
            f"normal matrix unusable for window {n}, order {order}")
    c = np.linalg.solve(gram, np.ones(m))
    return shift, c


def _validated(values, n: int, order: int) -> np.ndarray:
    if n < order + 2:
        raise WindowTooSmallError(f"window {n} < order+2 = {order + 2}")
    y = np.ascontiguousarray(values, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("expected a 1-d value array")
    if y.size < n:
        raise SeriesTooShortError(f"{y.size} values < window {n}")
    if not np.all(np.isfinite(y)):
        raise DegenerateSystemError("input contains non-finite values")
    return y


def rolling_regression_last(values, n: int, order: int,
                            anchor_every: int = DEFAULT_ANCHOR_EVERY) -> np.ndarray:
    """Rolling degree-`order` fit over trailing `n` points, last point only.

    Returns an array of length len(values) - n + 1; element j is the curve
    value at bar index n - 1 + j. Output at index t depends only on
    values[t-n+1 .. t].
    """
    y = _validated(values, n, order)
    shift, c = _functional(n, order)
    m = order + 1
    T = np.zeros(m)
    _moments_from_window(y, n - 1, n, m, T)
    out = np.empty(y.size - n + 1)
    out[0] = float(c @ T)
    if y.size > n:
        _advance(y, n, shift, c, T, 0, n, y.size, min(anchor_every, n - 1), out, 1)
    if not np.all(np.isfinite(out)):
        raise DegenerateSystemError("rolling fit produced non-finite values")
    return out


class RollingState:
    """Resumable rolling-regression cursor for one curve.

    Feeding a series in chunks through `extend` is bit-identical to one
    `rolling_regression_last` call over the concatenation: the moment
    vector, anchor countdown and operation order are preserved across
    chunk boundaries.
    """

    def __init__(self, n: int, order: int, anchor_every: int = DEFAULT_ANCHOR_EVERY):
        if n < order + 2:
            raise WindowTooSmallError(f"window {n} < order+2 = {order + 2}")
        self.n = n
        self.order = order
        self.anchor_every = min(anchor_every, n - 1)
        self._shift, self._c = _functional(n, order)
        self._T = np.zeros(order + 1)
        self._steps = 0
        self.next_t = 0  # next bar index whose value has not been produced

    def extend(self, y: np.ndarray, upto: int) -> np.ndarray:
        """Produce curve values for bar indices [next_t, upto).

        `y` must be the full series history (the cursor indexes into it).
        Indices before the window fills yield no values.
        """
        start = max(self.next_t, self.n - 1)
        if upto <= start:
            self.next_t = max(self.next_t, upto)
            return np.empty(0)
        out = np.empty(upto - start)
        pos = 0
        if self.next_t <= self.n - 1:
            self._T[:] = 0.0
            _moments_from_window(y, self.n - 1, self.n, self.order + 1, self._T)
            self._steps = 0
            out[0] = float(self._c @ self._T)
            pos = 1
            start = self.n
        self._steps = _advance(y, self.n, self._shift, self._c, self._T,
                               self._steps, start, upto, self.anchor_every,
                               out, pos)
        self.next_t = upto
        return out
