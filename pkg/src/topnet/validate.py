"""The falsification harness.

Nothing in here presumes the outcome it measures. The shift test displaces
price extrema against frozen figures; the three batch protocols aggregate
per-chart verdicts and price them under a caller-supplied chance level;
the surrogate comparison runs the identical pipeline on null series. A
chart's figures are built from the very prices being scored, so an
elevated unshifted count alone proves nothing: the informative quantities
are the shift profile and the real-vs-surrogate gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np

from .chart import AnalysisSettings, ChartAnalysis, analyze_chart, analyze_window
from .errors import (
    EmptyFigureSetError,
    InsufficientHistoryError,
    SeriesTooShortError,
    TopnetError,
)
from .figures import CharacteristicFigure, View
from .ingest import BarSeries, Ticks, aggregate_time_bars, MINUTE_MS
from .interact import detect_extrema, score_interactions
from .network import build_network
from .regress import CurveSchedule
from .surrogates import make_surrogate

__all__ = [
    "ShiftTestResult",
    "ProtocolReport",
    "SurrogateReport",
    "shift_test",
    "run_simultaneity",
    "run_totality",
    "run_consecutiveness",
    "surrogate_comparison",
    "topology_overlap",
    "binomial_tail",
    "adjacent_windows",
    "EPSILON_GRID",
    "TOTALITY_RESOLUTIONS_MIN",
    "INDEPENDENCE_NOTE",
]

EPSILON_GRID = (0.1, 0.01, 0.001)
TOTALITY_RESOLUTIONS_MIN = (1, 10, 60, 360)
INDEPENDENCE_NOTE = (
    "joint_p multiplies per-chart chance levels as if verdicts were "
    "independent; charts sharing data or construction are not, so read the "
    "raw qualification fraction alongside it")


def binomial_tail(n: int, k: int, eps: float) -> float:
    """P(X >= k) for X ~ Binomial(n, eps). Exact combinatorics in float;
    all terms positive so fsum keeps the relative error near machine eps."""
    if k <= 0:
        return 1.0
    if k > n:
        return 0.0
    terms = [math.comb(n, i) * eps ** i * (1.0 - eps) ** (n - i)
             for i in range(k, n + 1)]
    return float(min(1.0, math.fsum(terms)))


# ---------------------------------------------------------------------------
# Shift test
# ---------------------------------------------------------------------------

@dataclass
class ShiftTestResult:
    deltas: list[float]
    counts: list[int]
    extrema: int
    tolerance: float

    @property
    def base_count(self) -> int:
        return self.counts[self.deltas.index(0.0)]

    def to_dict(self) -> dict:
        return {
            "deltas": self.deltas,
            "counts": self.counts,
            "base_count": self.base_count,
            "extrema": self.extrema,
            "tolerance": self.tolerance,
        }


def shift_test(bars: BarSeries, figures: Sequence[CharacteristicFigure],
               view: View, deltas: Sequence[float],
               settings: AnalysisSettings = AnalysisSettings()) -> ShiftTestResult:
    """Re-count interactions with extremum ordinates displaced by each
    delta (fraction of the view range), figures held fixed. Displacing the
    extrema by +delta is the same distance geometry as shifting the whole
    network by -delta. 0 must be among the deltas (the baseline)."""
    deltas = [float(d) for d in deltas]
    if 0.0 not in deltas:
        raise ValueError("deltas must include 0")
    extrema = detect_extrema(bars, view, settings.prominence, settings.separation)
    counts = []
    for d in deltas:
        scored = score_interactions(extrema, figures, view, settings.tolerance,
                                    shift=d)
        counts.append(sum(1 for s in scored if s.interacting))
    return ShiftTestResult(deltas, counts, len(extrema), settings.tolerance)


# ---------------------------------------------------------------------------
# Batch protocols
# ---------------------------------------------------------------------------

@dataclass
class ProtocolReport:
    protocol: str  # simultaneity | totality | consecutiveness
    charts: list[dict]
    epsilon: float
    errors: list[str] = dc_field(default_factory=list)
    seed: Optional[int] = None
    settings: Optional[dict] = None

    @property
    def assessable(self) -> int:
        return sum(1 for c in self.charts if c["verdict"] != "not-assessable")

    @property
    def qualifying(self) -> int:
        return sum(1 for c in self.charts if c["verdict"] == "qualifies")

    @property
    def qualification_rate(self) -> float:
        n = self.assessable
        return self.qualifying / n if n else 0.0

    @property
    def p_value(self) -> float:
        return binomial_tail(self.assessable, self.qualifying, self.epsilon)

    @property
    def joint_p(self) -> float:
        """Paper-style all-qualify chance level eps**n_charts."""
        return self.epsilon ** len(self.charts)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "charts": self.charts,
            "chart_count": len(self.charts),
            "assessable": self.assessable,
            "qualifying": self.qualifying,
            "qualification_rate": self.qualification_rate,
            "epsilon": self.epsilon,
            "p_value": self.p_value,
            "p_values": {str(e): binomial_tail(self.assessable, self.qualifying, e)
                         for e in EPSILON_GRID},
            "joint_p": self.joint_p,
            "independence_note": INDEPENDENCE_NOTE,
            "errors": self.errors,
            "seed": self.seed,
            "settings": self.settings,
        }


def _chart_record(analysis: ChartAnalysis) -> dict:
    return analysis.summary()


def run_simultaneity(universe: Sequence[tuple[str, Ticks]], date_ms: int,
                     resolution_ms: int,
                     schedules: dict[str, CurveSchedule],
                     settings: AnalysisSettings = AnalysisSettings(),
                     epsilon: float = 0.001,
                     seed: int = 0) -> ProtocolReport:
    """One chart per instrument, same date and resolution, subtype drawn
    uniformly per instrument from `schedules` (logged seed). Instruments
    lacking history are collected as errors, not fatal."""
    if len(universe) < 2:
        raise InsufficientHistoryError("universe", "need at least 2 instruments")
    rng = np.random.default_rng(seed)
    names = sorted(schedules)
    charts, errors = [], []
    for symbol, ticks in universe:
        pick = names[int(rng.integers(0, len(names)))]
        try:
            keep = ticks.timestamp <= date_ms
            if not np.any(keep):
                raise SeriesTooShortError("no data at or before the protocol date")
            cut = Ticks(ticks.timestamp[keep], ticks.value[keep], ticks.volume[keep])
            bars = aggregate_time_bars(cut, resolution_ms)
            analysis = analyze_chart(bars, schedules[pick], settings, symbol=symbol)
            charts.append(_chart_record(analysis))
        except TopnetError as exc:
            errors.append(f"{symbol}: {exc}")
    return ProtocolReport("simultaneity", charts, epsilon, errors, seed,
                          settings.to_dict())


def run_totality(symbol: str, ticks: Ticks,
                 schedules: dict[str, CurveSchedule],
                 settings: AnalysisSettings = AnalysisSettings(),
                 epsilon: float = 0.001,
                 resolutions_min: Sequence[int] = TOTALITY_RESOLUTIONS_MIN) -> ProtocolReport:
    """Every subtype at every resolution for one instrument at one date:
    len(schedules) x len(resolutions) charts (20 with the stock presets).
    Any missing combination is fatal (InsufficientHistory)."""
    charts = []
    for name in sorted(schedules):
        for minutes in resolutions_min:
            try:
                bars = aggregate_time_bars(ticks, minutes * MINUTE_MS)
                analysis = analyze_chart(bars, schedules[name], settings,
                                         symbol=symbol)
            except TopnetError as exc:
                raise InsufficientHistoryError(
                    symbol, f"{name} at {minutes}m: {exc}") from exc
            charts.append(_chart_record(analysis))
    return ProtocolReport("totality", charts, epsilon, [], None,
                          settings.to_dict())


def adjacent_windows(t_lo: int, t_hi: int, count: int) -> list[tuple[int, int]]:
    """Split [t_lo, t_hi) into `count` adjacent non-overlapping windows
    whose union is exactly the span."""
    span = t_hi - t_lo
    if span < count:
        raise SeriesTooShortError(f"span {span} < {count} windows")
    edges = [t_lo + round(i * span / count) for i in range(count + 1)]
    return [(edges[i], edges[i + 1]) for i in range(count)]


def run_consecutiveness(symbol: str, bars: BarSeries, schedule: CurveSchedule,
                        window_count: int,
                        settings: AnalysisSettings = AnalysisSettings(),
                        epsilon: float = 0.001) -> ProtocolReport:
    """Adjacent non-overlapping view windows of one network, one verdict
    each. The network is built once; only the view moves."""
    try:
        network = build_network(bars, schedule, workers=settings.workers,
                                symbol=symbol)
    except SeriesTooShortError as exc:
        raise InsufficientHistoryError(symbol, str(exc)) from exc
    t_lo = 0 if settings.include_warmup else max(0, network.complete_from)
    t_hi = network.length
    try:
        windows = adjacent_windows(t_lo, t_hi, window_count)
    except SeriesTooShortError as exc:
        raise InsufficientHistoryError(symbol, str(exc)) from exc
    charts = []
    for a, b in windows:
        analysis = analyze_window(network, bars, a, b, settings, symbol=symbol)
        charts.append(_chart_record(analysis))
    return ProtocolReport("consecutiveness", charts, epsilon, [], None,
                          settings.to_dict())


# ---------------------------------------------------------------------------
# Surrogate comparison
# ---------------------------------------------------------------------------

@dataclass
class SurrogateReport:
    symbol: str
    real_rate: float
    real_charts: list[dict]
    methods: dict[str, dict]
    seeds: list[int]
    window_count: int
    settings: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "symbol": self.symbol,
            "real_rate": self.real_rate,
            "real_charts": self.real_charts,
            "methods": self.methods,
            "seeds": self.seeds,
            "window_count": self.window_count,
            "settings": self.settings,
        }


def _window_rate(bars: BarSeries, schedule: CurveSchedule, window_count: int,
                 settings: AnalysisSettings) -> tuple[float, list[dict]]:
    report = run_consecutiveness(bars.symbol or "series", bars, schedule,
                                 window_count, settings)
    return report.qualification_rate, report.charts


def surrogate_comparison(bars: BarSeries, schedule: CurveSchedule,
                         methods: Sequence[str],
                         seeds: Sequence[int],
                         window_count: int = 4,
                         settings: AnalysisSettings = AnalysisSettings()) -> SurrogateReport:
    """Identical pipeline on the real series and on >= 20 seeded surrogates
    per method; reports rates side by side with no directional assertion."""
    seeds = [int(s) for s in seeds]
    if len(seeds) < 20:
        raise ValueError("need at least 20 seeds per method")
    real_rate, real_charts = _window_rate(bars, schedule, window_count, settings)
    per_method: dict[str, dict] = {}
    for method in methods:
        rates = []
        for seed in seeds:
            surrogate = make_surrogate(bars, method, seed)
            rate, _ = _window_rate(surrogate, schedule, window_count, settings)
            rates.append(rate)
        arr = np.asarray(rates)
        per_method[method] = {
            "rates": rates,
            "mean": float(arr.mean()),
            "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
            "min": float(arr.min()),
            "max": float(arr.max()),
            "rate_gap": float(real_rate - arr.mean()),
        }
    return SurrogateReport(bars.symbol or "series", real_rate, real_charts,
                           per_method, seeds, window_count, settings.to_dict())


# ---------------------------------------------------------------------------
# Topology overlap
# ---------------------------------------------------------------------------

def _match_fraction(src: Sequence[CharacteristicFigure],
                    dst: Sequence[CharacteristicFigure],
                    col_map: Callable[[np.ndarray], np.ndarray],
                    tol_price: float) -> float:
    """Markedness-rank-weighted fraction of src figures with a dst match
    (mean vertical ridge distance <= tol_price under the column mapping)."""
    total = 0.0
    matched = 0.0
    for rank, fig in enumerate(sorted(src, key=lambda f: -f.markedness)):
        weight = 1.0 / (rank + 1)
        total += weight
        cols = np.arange(fig.columns[0], fig.columns[-1] + 1, dtype=np.float64)
        ords = fig.ordinate_at(cols)
        mapped = col_map(cols)
        hit = False
        for other in dst:
            inside = (mapped >= other.columns[0]) & (mapped <= other.columns[-1])
            if inside.sum() < 2:
                continue
            theirs = other.ordinate_at(mapped[inside])
            if float(np.mean(np.abs(ords[inside] - theirs))) <= tol_price:
                hit = True
                break
        if hit:
            matched += weight
    return matched / total if total else 0.0


def topology_overlap(figures_a: Sequence[CharacteristicFigure],
                     figures_b: Sequence[CharacteristicFigure],
                     price_range: float,
                     tolerance: float = 0.02,
                     column_map: Optional[tuple[Callable, Callable]] = None) -> float:
    """Symmetric [0, 1] agreement between two figure sets.

    `column_map` is an (a_to_b, b_to_a) pair of monotone column
    correspondences; identity when omitted (same-view subtype
    comparisons). Match tolerance is `tolerance` * `price_range`.
    """
    if not figures_a:
        raise EmptyFigureSetError("a")
    if not figures_b:
        raise EmptyFigureSetError("b")
    if column_map is None:
        identity = lambda c: c
        a_to_b, b_to_a = identity, identity
    else:
        a_to_b, b_to_a = column_map
    tol_price = tolerance * price_range
    ab = _match_fraction(figures_a, figures_b, a_to_b, tol_price)
    ba = _match_fraction(figures_b, figures_a, b_to_a, tol_price)
    return 0.5 * (ab + ba)
