"""Density-field rasterization and characteristic-figure extraction.

The curve bundle is accumulated into a column/price-bin grid: every curve
deposits unit mass per column it is defined at (linearly split between the
two nearest bins, or nearest-bin with splat="nearest"). Figures are then
extracted operationally:

- cord: a linked track of per-column density peaks standing out from the
  column's median density. Peaks above the median are linked greedily
  (nearest bin, bounded jump, short gaps bridged) and a whole track is kept
  as a cord iff its mean peak/median ratio reaches `peak_factor` and it is
  long enough. Filtering whole tracks (rather than thresholding peaks
  before linking) makes "raise the factor => never more cords" hold by
  construction.
- envelope: the q / (1-q) quantile boundary of the per-column mass, kept
  over maximal runs where the boundary track is smooth (bounded second
  difference) and long enough.
- boltrope: a cord whose mean position stays within `boltrope_bins` of an
  envelope track over their common columns.

Markedness is the mean excess density (cell minus column median) along the
ridge: a grid-relative pronouncedness proxy, comparable only within one
field, so downstream code treats it as a ranking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .errors import EmptyViewError, SpanTooShortError
from .network import Network

__all__ = [
    "View",
    "FigureParams",
    "DensityField",
    "CharacteristicFigure",
    "resolve_view",
    "density_field",
    "detect_figures",
    "extrapolate_figure",
]


@dataclass(frozen=True)
class View:
    """A chart window: bar indices [t0, t1) and the price range shown."""

    t0: int
    t1: int
    lo: float
    hi: float

    @property
    def columns(self) -> int:
        return self.t1 - self.t0

    @property
    def price_range(self) -> float:
        return self.hi - self.lo


def resolve_view(network: Network, bars=None, t0: int | None = None,
                 t1: int | None = None, include_warmup: bool = False) -> View:
    """Fix the chart geometry for a window of the network.

    The price range covers every curve ordinate in the window plus, when
    `bars` is given, the bar high/low band; all downstream distances are
    measured as fractions of this range. By default the window starts where
    the bundle is complete; pass include_warmup=True to include curve
    onsets.
    """
    lo_t = 0 if include_warmup else max(0, network.complete_from)
    t0 = lo_t if t0 is None else max(t0, 0)
    t1 = network.length if t1 is None else min(t1, network.length)
    if t1 <= t0:
        raise EmptyViewError(f"window [{t0}, {t1}) is empty")
    los, his = [], []
    starts = network.starts
    for k, col in enumerate(network.columns):
        a = max(t0, starts[k])
        if a >= t1 or col.size == 0:
            continue
        seg = col[a - starts[k]:t1 - starts[k]]
        if seg.size:
            los.append(seg.min())
            his.append(seg.max())
    if bars is not None and len(bars):
        los.append(float(np.min(bars.low[t0:t1])))
        his.append(float(np.max(bars.high[t0:t1])))
    if not los:
        raise EmptyViewError("no curve is defined inside the window")
    lo, hi = float(min(los)), float(max(his))
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5  # degenerate flat view
    return View(t0, t1, lo, hi)


@dataclass(frozen=True)
class FigureParams:
    """Operational thresholds for figure extraction (all tunable; every
    report states the values used)."""

    bins: int = 512                      # price bins of the density grid
    peak_factor: float = 2.0             # cord: mean peak/median ratio
    max_jump: int = 2                    # ridge link: bins per column
    min_span_frac: float = 0.05          # min figure extent, fraction of view columns
    envelope_quantile: float = 0.02      # boundary mass fraction
    boltrope_bins: int = 3               # cord-envelope proximity
    envelope_curvature_max: float = 2.0  # max |second difference| of boundary, bins
    gap_bridge: int = 2                  # columns a ridge may skip

    def __post_init__(self):
        if self.bins < 64:
            raise ValueError("bins must be >= 64")
        if not 0.0 < self.envelope_quantile < 0.5:
            raise ValueError("envelope_quantile must be in (0, 0.5)")
        for name in ("peak_factor", "max_jump", "min_span_frac",
                     "boltrope_bins", "envelope_curvature_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "bins", "peak_factor", "max_jump", "min_span_frac",
            "envelope_quantile", "boltrope_bins", "envelope_curvature_max",
            "gap_bridge")}


class DensityField:
    """Accumulated curve coverage on a (bins x columns) grid.

    data[r, c] is the mass in price bin r at view column c; per-column
    total mass equals the number of curves defined there (to splat
    tolerance). `short_mass` additionally holds the contribution of
    low-rank curves when rank attribution was requested.
    """

    def __init__(self, view: View, data: np.ndarray, curves_defined: np.ndarray,
                 short_mass: Optional[np.ndarray] = None):
        self.view = view
        self.data = data
        self.curves_defined = curves_defined
        self.short_mass = short_mass
        self._median: Optional[np.ndarray] = None

    @property
    def bins(self) -> int:
        return self.data.shape[0]

    @property
    def columns(self) -> int:
        return self.data.shape[1]

    def column_median(self) -> np.ndarray:
        """Per-column median of the occupied (positive) cells; 0 where the
        column is empty. This is the background level peaks must beat."""
        if self._median is None:
            med = np.zeros(self.columns)
            for c in range(self.columns):
                col = self.data[:, c]
                occupied = col[col > 0.0]
                if occupied.size:
                    med[c] = float(np.median(occupied))
            self._median = med
        return self._median

    def bin_center(self, bin_pos) -> np.ndarray:
        """Price ordinate of a (fractional) bin coordinate."""
        v = self.view
        return v.lo + (np.asarray(bin_pos, dtype=np.float64) + 0.5) * v.price_range / self.bins


def density_field(network: Network, view: View | None = None, bins: int = 512,
                  splat: str = "linear", short_rank_max: int | None = None,
                  bars=None) -> DensityField:
    """Rasterize the bundle over a view window.

    splat="linear" distributes each curve's unit column mass between the
    two nearest bins (anti-aliased); splat="nearest" drops it whole into
    the containing bin. short_rank_max enables per-rank attribution: mass
    from curve ranks <= short_rank_max is mirrored into a second grid.
    """
    if bins < 64:
        raise ValueError("bins must be >= 64")
    if view is None:
        view = resolve_view(network, bars=bars)
    C = view.columns
    if C <= 0:
        raise EmptyViewError("empty view window")
    data = np.zeros((bins, C))
    short_mass = np.zeros((bins, C)) if short_rank_max is not None else None
    defined = np.zeros(C, dtype=np.int64)
    starts = network.starts
    scale = bins / view.price_range
    any_curve = False
    for k, col in enumerate(network.columns):
        a = max(view.t0, int(starts[k]))
        if a >= view.t1 or col.size == 0:
            continue
        seg = col[a - starts[k]:view.t1 - starts[k]]
        if seg.size == 0:
            continue
        any_curve = True
        cols = np.arange(a - view.t0, a - view.t0 + seg.size)
        defined[cols] += 1
        targets = [data] if short_mass is None else (
            [data, short_mass] if (k + 1) <= short_rank_max else [data])
        if splat == "nearest":
            rows = np.clip(((seg - view.lo) * scale).astype(np.int64), 0, bins - 1)
            for grid in targets:
                np.add.at(grid, (rows, cols), 1.0)
        elif splat == "linear":
            b = (seg - view.lo) * scale - 0.5
            i0 = np.floor(b).astype(np.int64)
            w1 = b - i0
            r0 = np.clip(i0, 0, bins - 1)
            r1 = np.clip(i0 + 1, 0, bins - 1)
            for grid in targets:
                np.add.at(grid, (r0, cols), 1.0 - w1)
                np.add.at(grid, (r1, cols), w1)
        else:
            raise ValueError(f"unknown splat mode {splat!r}")
    if not any_curve:
        raise EmptyViewError("no curve is defined inside the window")
    return DensityField(view, data, defined, short_mass)


@dataclass
class CharacteristicFigure:
    """A detected dense formation: ridge polyline plus metadata."""

    kind: str                 # cord | envelope | boltrope
    columns: np.ndarray       # absolute bar indices, strictly increasing
    ordinates: np.ndarray     # price units, same length
    bin_track: np.ndarray = dc_field(repr=False)  # fractional bin coords
    markedness: float = 0.0
    side: str = "interior"    # upper | lower | interior
    short: Optional[bool] = None
    figure_id: int = -1

    @property
    def span(self) -> int:
        return int(self.columns[-1] - self.columns[0] + 1)

    def ordinate_at(self, column) -> np.ndarray:
        """Ridge ordinate at arbitrary columns inside the span (linear
        interpolation between vertices); NaN outside the span."""
        col = np.asarray(column, dtype=np.float64)
        out = np.interp(col, self.columns.astype(np.float64), self.ordinates)
        outside = (col < self.columns[0]) | (col > self.columns[-1])
        return np.where(outside, np.nan, out)

    def covers(self, column: int) -> bool:
        return self.columns[0] <= column <= self.columns[-1]

    def to_dict(self) -> dict:
        return {
            "id": self.figure_id,
            "kind": self.kind,
            "side": self.side,
            "markedness": float(self.markedness),
            "span": self.span,
            "short": self.short,
            "ridge": [[int(c), float(y)] for c, y in zip(self.columns, self.ordinates)],
        }


def _parabolic_offset(prev: float, cur: float, nxt: float) -> float:
    denom = prev - 2.0 * cur + nxt
    if denom >= 0.0 or cur <= 0.0:
        return 0.0
    return float(np.clip(0.5 * (prev - nxt) / denom, -0.5, 0.5))


def _find_column_peaks(data: np.ndarray, med: np.ndarray) -> list[np.ndarray]:
    """Per column: bin indices of local maxima strictly above the median."""
    R, C = data.shape
    up = np.empty((R, C), dtype=bool)
    up[0] = True
    up[1:] = data[1:] > data[:-1]
    down = np.empty((R, C), dtype=bool)
    down[-1] = True
    down[:-1] = data[:-1] >= data[1:]
    above = data > med[None, :]
    mask = up & down & above & (data > 0.0)
    return [np.nonzero(mask[:, c])[0] for c in range(C)]


class _Track:
    __slots__ = ("cols", "bins", "pos", "vals", "meds", "last_col", "last_bin")

    def __init__(self, c, b, pos, v, m):
        self.cols = [c]
        self.bins = [b]
        self.pos = [pos]
        self.vals = [v]
        self.meds = [m]
        self.last_col = c
        self.last_bin = b

    def add(self, c, b, pos, v, m):
        self.cols.append(c)
        self.bins.append(b)
        self.pos.append(pos)
        self.vals.append(v)
        self.meds.append(m)
        self.last_col = c
        self.last_bin = b


def _link_ridges(data: np.ndarray, med: np.ndarray, max_jump: int,
                 gap_bridge: int) -> list[_Track]:
    R, C = data.shape
    peaks = _find_column_peaks(data, med)
    active: list[_Track] = []
    done: list[_Track] = []
    for c in range(C):
        bins_here = peaks[c]
        survivors = []
        for tr in active:
            if c - tr.last_col - 1 > gap_bridge:
                done.append(tr)
            else:
                survivors.append(tr)
        active = survivors
        if bins_here.size == 0:
            continue
        # deterministic greedy matching, closest pairs first
        pairs = []
        for ti, tr in enumerate(active):
            allowance = max_jump * (c - tr.last_col)
            for pi, b in enumerate(bins_here):
                dist = abs(int(b) - tr.last_bin)
                if dist <= allowance:
                    pairs.append((dist, ti, pi))
        pairs.sort()
        used_t, used_p = set(), set()
        for dist, ti, pi in pairs:
            if ti in used_t or pi in used_p:
                continue
            used_t.add(ti)
            used_p.add(pi)
            b = int(bins_here[pi])
            v = float(data[b, c])
            off = _parabolic_offset(data[b - 1, c] if b > 0 else 0.0, v,
                                    data[b + 1, c] if b < R - 1 else 0.0)
            active[ti].add(c, b, b + off, v, float(med[c]))
        for pi, b in enumerate(bins_here):
            if pi in used_p:
                continue
            b = int(b)
            v = float(data[b, c])
            off = _parabolic_offset(data[b - 1, c] if b > 0 else 0.0, v,
                                    data[b + 1, c] if b < R - 1 else 0.0)
            active.append(_Track(c, b, b + off, v, float(med[c])))
    done.extend(active)
    return done


def _quantile_track(data: np.ndarray, q: float) -> tuple[np.ndarray, np.ndarray]:
    """Fractional bin position where cumulative column mass crosses q*total,
    plus a validity mask (columns with positive mass)."""
    R, C = data.shape
    total = data.sum(axis=0)
    ok = total > 0.0
    pos = np.full(C, np.nan)
    cum = np.cumsum(data, axis=0)
    for c in range(C):
        if not ok[c]:
            continue
        target = q * total[c]
        i = int(np.searchsorted(cum[:, c], target, side="left"))
        i = min(i, R - 1)
        before = cum[i - 1, c] if i > 0 else 0.0
        mass = data[i, c]
        frac = (target - before) / mass if mass > 0 else 0.5
        pos[c] = i - 0.5 + min(max(frac, 0.0), 1.0)
    return pos, ok


def _smooth_runs(track: np.ndarray, ok: np.ndarray, curv_max: float) -> list[tuple[int, int]]:
    """Maximal [a, b) column runs where the track exists and its second
    difference stays within curv_max."""
    C = track.size
    good = ok.copy()
    for c in range(1, C - 1):
        if ok[c - 1] and ok[c] and ok[c + 1]:
            if abs(track[c + 1] - 2.0 * track[c] + track[c - 1]) > curv_max:
                good[c] = False
    runs = []
    c = 0
    while c < C:
        if good[c]:
            a = c
            while c < C and good[c]:
                c += 1
            runs.append((a, c))
        else:
            c += 1
    return runs


def detect_figures(field: DensityField, params: FigureParams = FigureParams()) -> list[CharacteristicFigure]:
    """Extract cords, envelopes and boltropes, sorted by falling markedness.

    An empty list is a valid outcome (sparse or featureless bundles).
    """
    data = field.data
    if data.size == 0:
        return []
    med = field.column_median()
    C = field.columns
    min_span = max(2, math.ceil(params.min_span_frac * C))
    figures: list[CharacteristicFigure] = []

    # --- cords ---------------------------------------------------------
    for tr in _link_ridges(data, med, params.max_jump, params.gap_bridge):
        cols = np.asarray(tr.cols, dtype=np.int64)
        if cols[-1] - cols[0] + 1 < min_span:
            continue
        vals = np.asarray(tr.vals)
        meds = np.asarray(tr.meds)
        ratios = vals / np.where(meds > 0, meds, np.inf)
        if float(ratios.mean()) < params.peak_factor:
            continue
        span = int(cols[-1] - cols[0] + 1)
        markedness = float((vals - meds).sum() / span)
        if markedness <= 0.0:
            continue
        pos = np.asarray(tr.pos)
        figures.append(CharacteristicFigure(
            kind="cord", columns=cols + field.view.t0,
            ordinates=field.bin_center(pos), bin_track=pos,
            markedness=markedness, side="interior"))

    # --- envelopes -----------------------------------------------------
    envelopes: list[CharacteristicFigure] = []
    for q, side in ((params.envelope_quantile, "lower"),
                    (1.0 - params.envelope_quantile, "upper")):
        track, ok = _quantile_track(data, q)
        for a, b in _smooth_runs(track, ok, params.envelope_curvature_max):
            if b - a < min_span:
                continue
            cols = np.arange(a, b, dtype=np.int64)
            pos = track[a:b]
            rows = np.clip(np.rint(pos).astype(np.int64), 0, field.bins - 1)
            excess = data[rows, cols] - med[cols]
            markedness = float(excess.sum() / (b - a))
            if markedness <= 0.0:
                continue
            envelopes.append(CharacteristicFigure(
                kind="envelope", columns=cols + field.view.t0,
                ordinates=field.bin_center(pos), bin_track=pos.copy(),
                markedness=markedness, side=side))

    # --- boltropes: cords that hug an envelope --------------------------
    for fig in figures:
        if fig.kind != "cord":
            continue
        for env in envelopes:
            a = max(fig.columns[0], env.columns[0])
            b = min(fig.columns[-1], env.columns[-1])
            overlap = b - a + 1
            if overlap < max(2, min(fig.span, env.span) // 2):
                continue
            f_pos = np.interp(np.arange(a, b + 1), fig.columns, fig.bin_track)
            e_pos = np.interp(np.arange(a, b + 1), env.columns, env.bin_track)
            if float(np.mean(np.abs(f_pos - e_pos))) <= params.boltrope_bins:
                fig.kind = "boltrope"
                fig.side = env.side
                break

    figures.extend(envelopes)

    # attribution: a figure is "short" when most of its ridge mass comes
    # from low-rank curves (requires the per-rank splat option)
    if field.short_mass is not None:
        for fig in figures:
            cols = fig.columns - field.view.t0
            rows = np.clip(np.rint(fig.bin_track).astype(np.int64), 0, field.bins - 1)
            total = field.data[rows, cols].sum()
            short = field.short_mass[rows, cols].sum()
            fig.short = bool(total > 0 and short / total > 0.5)

    figures.sort(key=lambda f: (-f.markedness, int(f.columns[0]), float(f.bin_track[0])))
    for i, fig in enumerate(figures):
        fig.figure_id = i
    return figures


def extrapolate_figure(figure: CharacteristicFigure, horizon: int,
                       order: int = 1) -> np.ndarray:
    """Project the ridge forward from a fit of its trailing third.

    Returns an (horizon, 2) array of (column, ordinate) over
    (last column, last column + horizon]; an empty array for horizon 0.
    """
    if order not in (1, 2):
        raise ValueError("extrapolation order must be 1 or 2")
    if figure.span < 3:
        raise SpanTooShortError(f"figure span {figure.span} < 3 columns")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if horizon == 0:
        return np.empty((0, 2))
    m = max(order + 1, math.ceil(len(figure.columns) / 3))
    cols = figure.columns[-m:].astype(np.float64)
    ords = figure.ordinates[-m:]
    last = cols[-1]
    x = cols - last  # recentered abscissas for conditioning
    V = np.vander(x, order + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, ords, rcond=None)
    future = np.arange(1, horizon + 1, dtype=np.float64)
    Vf = np.vander(future, order + 1, increasing=True)
    return np.column_stack([last + future, Vf @ coef])
