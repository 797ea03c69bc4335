"""Local price extrema, extremum-figure interaction scoring, and the
per-chart qualification verdict.

Maxima are taken on the bar highs and minima on the bar lows (it is the
band edge that reaches toward a figure, not the injected midpoint). All
distances are fractions of the view price range, which keeps every count
invariant under affine price transforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.signal import find_peaks

from .errors import SeriesTooShortError
from .figures import CharacteristicFigure, View
from .ingest import BarSeries

__all__ = [
    "Extremum",
    "Interaction",
    "QualificationResult",
    "detect_extrema",
    "score_interactions",
    "qualify_chart",
    "DEFAULT_TOLERANCE",
    "DEFAULT_PROMINENCE",
    "DEFAULT_SEPARATION",
]

# the "couple of millimeters on a full-size chart" reading: ~2% of the
# plotted price range; always echoed in reports
DEFAULT_TOLERANCE = 0.02
DEFAULT_PROMINENCE = 0.005
DEFAULT_SEPARATION = 3


@dataclass(frozen=True)
class Extremum:
    index: int        # bar index (absolute)
    kind: str         # "max" | "min"
    ordinate: float   # high for maxima, low for minima
    prominence: float  # price units


@dataclass(frozen=True)
class Interaction:
    extremum: Extremum
    figure_id: int            # -1 when no figure covers the column
    distance: float           # fraction of view price range (inf if no figure)
    interacting: bool

    def to_dict(self) -> dict:
        return {
            "index": int(self.extremum.index),
            "kind": self.extremum.kind,
            "ordinate": float(self.extremum.ordinate),
            "figure_id": int(self.figure_id),
            "distance": None if not np.isfinite(self.distance) else float(self.distance),
            "interacting": bool(self.interacting),
        }


@dataclass(frozen=True)
class QualificationResult:
    extrema: int
    interacting: int
    fraction: float
    qualifies: bool
    verdict: str  # "qualifies" | "fails" | "not-assessable"
    tolerance: float
    fraction_threshold: float
    min_extrema: int

    def to_dict(self) -> dict:
        return {
            "extrema": self.extrema,
            "interacting": self.interacting,
            "fraction": self.fraction,
            "qualifies": self.qualifies,
            "verdict": self.verdict,
            "tolerance": self.tolerance,
            "fraction_threshold": self.fraction_threshold,
            "min_extrema": self.min_extrema,
        }


def detect_extrema(bars: BarSeries, view: View,
                   prominence: float = DEFAULT_PROMINENCE,
                   separation: int = DEFAULT_SEPARATION) -> list[Extremum]:
    """Alternating prominent turning points inside the view window.

    `prominence` is a fraction of the view price range; `separation` a
    minimum index gap between same-kind extrema. Window endpoints are never
    reported. When two same-kind extrema survive adjacent in the sequence,
    only the more extreme one is kept, so kinds strictly alternate.
    """
    t0, t1 = view.t0, view.t1
    if t1 - t0 < 3:
        raise SeriesTooShortError("need at least 3 bars to have an interior extremum")
    high = bars.high[t0:t1]
    low = bars.low[t0:t1]
    min_prom = prominence * view.price_range
    imax, pmax = find_peaks(high, prominence=min_prom, distance=max(1, separation))
    imin, pmin = find_peaks(-low, prominence=min_prom, distance=max(1, separation))
    merged: list[Extremum] = []
    for i, p in zip(imax, pmax["prominences"]):
        merged.append(Extremum(int(i) + t0, "max", float(high[i]), float(p)))
    for i, p in zip(imin, pmin["prominences"]):
        merged.append(Extremum(int(i) + t0, "min", float(low[i]), float(p)))
    merged.sort(key=lambda e: (e.index, e.kind))
    # enforce alternation: collapse same-kind neighbours to the stronger one
    out: list[Extremum] = []
    for e in merged:
        if out and out[-1].kind == e.kind:
            prev = out[-1]
            if (e.kind == "max" and e.ordinate >= prev.ordinate) or \
               (e.kind == "min" and e.ordinate <= prev.ordinate):
                out[-1] = e
        else:
            out.append(e)
    return out


def _ridge_distance(extremum: Extremum, figure: CharacteristicFigure) -> float:
    if not figure.covers(extremum.index):
        return np.inf
    ridge = float(figure.ordinate_at(extremum.index))
    return abs(extremum.ordinate - ridge)


def score_interactions(extrema: Sequence[Extremum],
                       figures: Sequence[CharacteristicFigure],
                       view: View,
                       tolerance: float = DEFAULT_TOLERANCE,
                       shift: float = 0.0) -> list[Interaction]:
    """Distance of each extremum to the nearest figure ridge at its column.

    Ridges are interpolated linearly between vertices. The recorded
    distance is always the global nearest-ridge distance (so counts are a
    pure function of geometry); the side preference only decides which
    figure an interaction is attributed to: maxima try upper-side figures
    first, minima lower-side, falling back to the nearest of any side.
    `shift` displaces extremum ordinates by that fraction of the view range
    (the reductio test); figures stay fixed.
    """
    rng_price = view.price_range
    offset = shift * rng_price
    out: list[Interaction] = []
    for e in extrema:
        probe = Extremum(e.index, e.kind, e.ordinate + offset, e.prominence)
        best_id, best = -1, np.inf
        pref_id, pref = -1, np.inf
        preferred_side = "upper" if e.kind == "max" else "lower"
        for fig in figures:
            d = _ridge_distance(probe, fig)
            if d < best:
                best_id, best = fig.figure_id, d
            if fig.side == preferred_side and d < pref:
                pref_id, pref = fig.figure_id, d
        frac = best / rng_price if np.isfinite(best) else np.inf
        interacting = bool(frac <= tolerance)
        chosen = pref_id if (interacting and np.isfinite(pref) and pref / rng_price <= tolerance) else best_id
        out.append(Interaction(e, chosen if interacting else best_id, frac, interacting))
    return out


def qualify_chart(interactions: Sequence[Interaction],
                  fraction_threshold: float = 0.5,
                  min_extrema: int = 8,
                  tolerance: float = DEFAULT_TOLERANCE) -> QualificationResult:
    """Verdict for one chart: does at least `fraction_threshold` of its
    extrema interact? Below `min_extrema` extrema the chart is
    not-assessable rather than failed."""
    n = len(interactions)
    k = sum(1 for i in interactions if i.interacting)
    fraction = k / n if n else 0.0
    if n < min_extrema:
        verdict, qualifies = "not-assessable", False
    elif fraction >= fraction_threshold:
        verdict, qualifies = "qualifies", True
    else:
        verdict, qualifies = "fails", False
    return QualificationResult(n, k, fraction, qualifies, verdict,
                               tolerance, fraction_threshold, min_extrema)
