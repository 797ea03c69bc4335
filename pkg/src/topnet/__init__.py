"""topnet: topological networks of moving polynomial regressions.

Build dense bundles of last-point rolling regressions over a price (or any)
series, extract the emergent dense formations ("characteristic figures"),
measure how local price extrema interact with them, and subject the
figures-drive-the-price claim to shift tests, batch qualification
protocols and surrogate-data controls.
"""

__version__ = "0.1.0"

from .chart import AnalysisSettings, ChartAnalysis, analyze_chart, analyze_window
from .errors import TopnetError
from .figures import (
    CharacteristicFigure,
    DensityField,
    FigureParams,
    View,
    density_field,
    detect_figures,
    extrapolate_figure,
    resolve_view,
)
from .ingest import (
    Bar,
    BarSeries,
    CsvSpec,
    Granularity,
    Tick,
    Ticks,
    aggregate_nvb,
    aggregate_time_bars,
    load_ticks,
    read_bar_cache,
    write_bar_cache,
)
from .interact import (
    Extremum,
    Interaction,
    QualificationResult,
    detect_extrema,
    qualify_chart,
    score_interactions,
)
from .network import Network, NetworkSlice, build_network, read_network, write_network
from .regress import (
    CurveSchedule,
    RollingState,
    compare_value_count,
    compute_schedule,
    load_presets,
    rolling_regression_last,
    value_count,
)
from .render import RenderStyle, render_chart, render_chart_svg
from .surrogates import SURROGATE_METHODS, make_surrogate
from .validate import (
    ProtocolReport,
    ShiftTestResult,
    SurrogateReport,
    binomial_tail,
    run_consecutiveness,
    run_simultaneity,
    run_totality,
    shift_test,
    surrogate_comparison,
    topology_overlap,
)

__all__ = [name for name in dir() if not name.startswith("_")]
