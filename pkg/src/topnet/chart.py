"""One-chart analysis pipeline: bundle -> field -> figures -> extrema ->
interactions -> verdict. Shared by the CLI, the protocols and the service."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

from .errors import SeriesTooShortError
from .figures import (
    CharacteristicFigure,
    DensityField,
    FigureParams,
    View,
    density_field,
    detect_figures,
    resolve_view,
)
from .ingest import BarSeries
from .interact import (
    DEFAULT_PROMINENCE,
    DEFAULT_SEPARATION,
    DEFAULT_TOLERANCE,
    Extremum,
    Interaction,
    QualificationResult,
    detect_extrema,
    qualify_chart,
    score_interactions,
)
from .network import Network, build_network
from .regress import CurveSchedule

__all__ = ["AnalysisSettings", "ChartAnalysis", "analyze_window", "analyze_chart"]


@dataclass(frozen=True)
class AnalysisSettings:
    """Every knob a chart verdict depends on; echoed into reports."""

    figure_params: FigureParams = dc_field(default_factory=FigureParams)
    tolerance: float = DEFAULT_TOLERANCE
    prominence: float = DEFAULT_PROMINENCE
    separation: int = DEFAULT_SEPARATION
    fraction_threshold: float = 0.5
    min_extrema: int = 8
    view_bars: int = 400
    include_warmup: bool = False
    short_rank_attribution: bool = False
    workers: int = 1

    def to_dict(self) -> dict:
        return {
            "figure_params": self.figure_params.to_dict(),
            "tolerance": self.tolerance,
            "prominence": self.prominence,
            "separation": self.separation,
            "fraction_threshold": self.fraction_threshold,
            "min_extrema": self.min_extrema,
            "view_bars": self.view_bars,
            "include_warmup": self.include_warmup,
            "short_rank_attribution": self.short_rank_attribution,
        }


@dataclass
class ChartAnalysis:
    symbol: str
    subtype: str
    granularity: str
    network: Network
    view: View
    field: DensityField
    figures: list[CharacteristicFigure]
    extrema: list[Extremum]
    interactions: list[Interaction]
    result: QualificationResult

    def summary(self) -> dict:
        return {
            "symbol": self.symbol,
            "subtype": self.subtype,
            "granularity": self.granularity,
            "window": [self.view.t0, self.view.t1],
            "figures": len(self.figures),
            **self.result.to_dict(),
        }


def analyze_window(network: Network, bars: BarSeries, t0: int, t1: int,
                   settings: AnalysisSettings = AnalysisSettings(),
                   symbol: str = "") -> ChartAnalysis:
    """Score one view window of an already-built network."""
    view = resolve_view(network, bars, t0, t1,
                        include_warmup=settings.include_warmup)
    short_max = (network.schedule.count // 3
                 if settings.short_rank_attribution else None)
    field = density_field(network, view, bins=settings.figure_params.bins,
                          short_rank_max=short_max)
    figures = detect_figures(field, settings.figure_params)
    extrema = detect_extrema(bars, view, settings.prominence, settings.separation)
    interactions = score_interactions(extrema, figures, view, settings.tolerance)
    result = qualify_chart(interactions, settings.fraction_threshold,
                           settings.min_extrema, settings.tolerance)
    return ChartAnalysis(symbol or network.symbol, network.label,
                         network.granularity.label if network.granularity else "",
                         network, view, field, figures, extrema, interactions,
                         result)


def analyze_chart(bars: BarSeries, schedule: CurveSchedule,
                  settings: AnalysisSettings = AnalysisSettings(),
                  symbol: str = "",
                  network: Optional[Network] = None) -> ChartAnalysis:
    """Build (or reuse) the bundle and score its trailing view window."""
    if network is None:
        network = build_network(bars, schedule, workers=settings.workers,
                                symbol=symbol)
    t1 = network.length
    t0 = 0 if settings.include_warmup else max(0, network.complete_from)
    t0 = max(t0, t1 - settings.view_bars)
    if t1 - t0 < 3:
        raise SeriesTooShortError(
            f"only {t1 - t0} complete columns; need at least 3")
    return analyze_window(network, bars, t0, t1, settings, symbol)
