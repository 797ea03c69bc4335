"""Command-line entry points.

Data conventions: tick CSVs live under the data root (one file per
instrument, `<SYMBOL>.csv`), bar caches and networks are binary artifacts,
reports land in the output directory as JSON + CSV + text + a PNG figure.
Verdicts never affect the exit code; only usage, config and data errors do.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .chart import analyze_chart, analyze_window
from .config import DATA_ROOT_ENV, RunConfig, parse_resolution
from .errors import ConfigError, DataError, TopnetError
from .figures import extrapolate_figure
from .ingest import (
    BarSeries,
    aggregate_nvb,
    aggregate_time_bars,
    load_ticks,
    read_bar_cache,
    write_bar_cache,
)
from .network import build_network, read_network, write_network
from .render import RenderStyle, chart_filename, render_chart, render_chart_svg
from .reportio import write_report
from .validate import (
    run_consecutiveness,
    run_simultaneity,
    run_totality,
    shift_test,
    surrogate_comparison,
)

__all__ = ["main"]


def _tick_path(cfg: RunConfig, symbol: str, explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    path = Path(cfg.data_root) / f"{symbol}.csv"
    if not path.exists():
        raise DataError(f"no tick file for {symbol!r}: {path}")
    return path


def _load_bars(cfg: RunConfig, args) -> BarSeries:
    if getattr(args, "bars", None):
        series, _ = read_bar_cache(args.bars)
        return series
    symbol = args.symbol or (Path(args.ticks).stem if args.ticks else None)
    if not symbol:
        raise ConfigError("need --symbol, --ticks or --bars")
    ticks = load_ticks(_tick_path(cfg, symbol, args.ticks), cfg.csv_spec())
    gran = parse_resolution(args.resolution or cfg.resolution)
    if gran.kind == "time":
        bars = aggregate_time_bars(ticks, int(gran.amount))
    else:
        bars = aggregate_nvb(ticks, gran.amount)
    bars.symbol = symbol
    return bars


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_bars(cfg: RunConfig, args) -> int:
    bars = _load_bars(cfg, args)
    out = Path(args.out) if args.out else _out_dir(cfg) / (
        f"{bars.symbol}_{bars.granularity.label}.bars")
    write_bar_cache(out, bars, {"config_hash": cfg.config_hash()})
    print(f"wrote {len(bars)} bars -> {out}")
    return 0


def cmd_build(cfg: RunConfig, args) -> int:
    bars = _load_bars(cfg, args)
    schedule = cfg.schedule(args.subtype)
    network = build_network(bars, schedule, workers=cfg.workers)
    out = Path(args.out) if args.out else _out_dir(cfg) / (
        f"{bars.symbol}_{bars.granularity.label}_{schedule.label}.net")
    write_network(out, network, {"config_hash": cfg.config_hash()})
    print(f"built {schedule.label} network: {schedule.count} curves x "
          f"{network.length} bars -> {out}")
    return 0


def _analysis(cfg: RunConfig, args):
    bars = _load_bars(cfg, args)
    schedule = cfg.schedule(getattr(args, "subtype", None))
    network = read_network(args.network) if getattr(args, "network", None) else None
    return analyze_chart(bars, schedule, cfg.settings(), symbol=bars.symbol,
                         network=network), bars


def cmd_render(cfg: RunConfig, args) -> int:
    analysis, bars = _analysis(cfg, args)
    style = RenderStyle(width=cfg.render_width, height=cfg.render_height,
                        figure_overlay=cfg.figure_overlay)
    name = chart_filename(analysis.symbol, analysis.granularity,
                          analysis.subtype, analysis.view,
                          "svg" if args.svg else "png")
    out = Path(args.out) if args.out else _out_dir(cfg) / name
    if args.svg:
        out.write_text(render_chart_svg(analysis.network, bars,
                                        analysis.figures, style, analysis.view))
    else:
        out.write_bytes(render_chart(analysis.network, bars, analysis.figures,
                                     style, analysis.view))
    print(f"rendered {out}")
    return 0


def cmd_figures(cfg: RunConfig, args) -> int:
    analysis, _ = _analysis(cfg, args)
    payload = {
        "config_hash": cfg.config_hash(),
        "symbol": analysis.symbol,
        "subtype": analysis.subtype,
        "granularity": analysis.granularity,
        "window": [analysis.view.t0, analysis.view.t1],
        "price_range": [analysis.view.lo, analysis.view.hi],
        "figures": [f.to_dict() for f in analysis.figures],
    }
    if args.horizon:
        for fig, entry in zip(analysis.figures, payload["figures"]):
            if fig.span >= 3:
                proj = extrapolate_figure(fig, args.horizon, args.order)
                entry["extrapolation"] = [[float(c), float(y)] for c, y in proj]
    out = Path(args.out) if args.out else _out_dir(cfg) / (
        f"{analysis.symbol}_{analysis.granularity}_{analysis.subtype}_figures.json")
    out.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(f"{len(analysis.figures)} figures -> {out}")
    return 0


def cmd_qualify(cfg: RunConfig, args) -> int:
    analysis, bars = _analysis(cfg, args)
    out = _out_dir(cfg)
    name = args.name or f"qualify_{analysis.symbol}_{analysis.granularity}_{analysis.subtype}"
    payload = {
        "config_hash": cfg.config_hash(),
        **analysis.summary(),
        "interactions": [i.to_dict() for i in analysis.interactions],
        "figures": [f.to_dict() for f in analysis.figures],
        "settings": cfg.settings().to_dict(),
    }
    (out / f"{name}.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    import csv as _csv
    with open(out / f"{name}.csv", "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["index", "kind", "ordinate", "figure_id", "distance", "interacting"])
        for i in analysis.interactions:
            d = i.to_dict()
            w.writerow([d["index"], d["kind"], d["ordinate"], d["figure_id"],
                        d["distance"], d["interacting"]])
    style = RenderStyle(width=cfg.render_width, height=cfg.render_height,
                        figure_overlay=True)
    (out / f"{name}.png").write_bytes(
        render_chart(analysis.network, bars, analysis.figures, style, analysis.view))
    print(f"{analysis.symbol}: {analysis.result.verdict} "
          f"({analysis.result.interacting}/{analysis.result.extrema} interacting) -> {out / name}.*")
    return 0


def cmd_shift_test(cfg: RunConfig, args) -> int:
    analysis, bars = _analysis(cfg, args)
    deltas = [float(x) for x in args.deltas.split(",")]
    result = shift_test(bars, analysis.figures, analysis.view, deltas,
                        cfg.settings())
    name = args.name or f"shift_{analysis.symbol}_{analysis.granularity}_{analysis.subtype}"
    paths = write_report(_out_dir(cfg), name, result, cfg.config_hash(),
                         extra={"symbol": analysis.symbol,
                                "subtype": analysis.subtype,
                                "granularity": analysis.granularity})
    print(f"shift-test counts {dict(zip(result.deltas, result.counts))} -> {paths['json']}")
    return 0


def cmd_protocol(cfg: RunConfig, args) -> int:
    settings = cfg.settings()
    schedules = cfg.schedules()
    if args.kind == "simultaneity":
        symbols = (args.universe.split(",") if args.universe else
                   sorted(p.stem for p in Path(cfg.data_root).glob("*.csv")))
        universe = [(s, load_ticks(_tick_path(cfg, s, None), cfg.csv_spec()))
                    for s in symbols]
        date = args.date if args.date is not None else cfg.date
        if date is None:
            date = max(int(t.timestamp[-1]) for _, t in universe)
        gran = parse_resolution(args.resolution or cfg.resolution)
        report = run_simultaneity(universe, date, int(gran.amount), schedules,
                                  settings, cfg.epsilon, cfg.seed)
        name = args.name or "protocol_simultaneity"
    elif args.kind == "totality":
        symbol = args.symbol
        if not symbol:
            raise ConfigError("totality needs --symbol")
        ticks = load_ticks(_tick_path(cfg, symbol, args.ticks), cfg.csv_spec())
        report = run_totality(symbol, ticks, schedules, settings, cfg.epsilon)
        name = args.name or f"protocol_totality_{symbol}"
    else:  # consecutiveness
        bars = _load_bars(cfg, args)
        schedule = cfg.schedule(args.subtype)
        report = run_consecutiveness(bars.symbol, bars, schedule,
                                     args.windows or cfg.window_count,
                                     settings, cfg.epsilon)
        name = args.name or f"protocol_consecutiveness_{bars.symbol}"
    paths = write_report(_out_dir(cfg), name, report, cfg.config_hash())
    print(f"{report.protocol}: {report.qualifying}/{report.assessable} qualify "
          f"(rate {report.qualification_rate:.2f}, p={report.p_value:.3g}) -> {paths['json']}")
    return 0


def cmd_surrogate(cfg: RunConfig, args) -> int:
    bars = _load_bars(cfg, args)
    schedule = cfg.schedule(args.subtype)
    seeds = [cfg.seed + i for i in range(args.seeds or cfg.surrogate_seeds)]
    report = surrogate_comparison(bars, schedule,
                                  list(cfg.surrogate_methods), seeds,
                                  args.windows or cfg.window_count,
                                  cfg.settings())
    name = args.name or f"surrogate_{bars.symbol}_{bars.granularity.label}_{schedule.label}"
    paths = write_report(_out_dir(cfg), name, report, cfg.config_hash())
    gaps = {m: f"{s['rate_gap']:+.3f}" for m, s in report.methods.items()}
    print(f"real rate {report.real_rate:.2f}, gaps {gaps} -> {paths['json']}")
    return 0


def cmd_serve(cfg: RunConfig, args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(cfg), host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topnet",
        description="Curve-bundle construction, figure extraction and "
                    "interaction falsification tests for time series.")
    parser.add_argument("--version", action="version", version=f"topnet {__version__}")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--data-root", help=f"tick data directory (or ${DATA_ROOT_ENV})")
    parser.add_argument("--out-dir", help="artifact output directory")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--tau", type=float, dest="tolerance",
                        help="interaction tolerance (fraction of view range)")
    parser.add_argument("--view-bars", type=int, help="chart window width in bars")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, network=False):
        p.add_argument("--symbol")
        p.add_argument("--ticks", help="explicit tick CSV path")
        p.add_argument("--bars", help="bar cache file")
        p.add_argument("--resolution", help="e.g. 10m, 600000ms, nvb250")
        p.add_argument("--subtype", help="schedule preset, e.g. TN3")
        p.add_argument("--out")
        if network:
            p.add_argument("--network", help="prebuilt network binary")

    p = sub.add_parser("bars", help="aggregate ticks into a bar cache")
    common(p)
    p = sub.add_parser("build", help="build and store a curve bundle")
    common(p)
    p = sub.add_parser("render", help="render a chart image")
    common(p, network=True)
    p.add_argument("--svg", action="store_true")
    p = sub.add_parser("figures", help="detect figures, write JSON polylines")
    common(p, network=True)
    p.add_argument("--horizon", type=int, default=0, help="extrapolation columns")
    p.add_argument("--order", type=int, default=1, choices=(1, 2))
    p = sub.add_parser("qualify", help="score one chart and write the verdict")
    common(p, network=True)
    p.add_argument("--name")
    p = sub.add_parser("shift-test", help="interaction counts under vertical shifts")
    common(p, network=True)
    p.add_argument("--deltas", default="0,0.01,-0.01,0.02,-0.02,0.05,-0.05")
    p.add_argument("--name")
    p = sub.add_parser("protocol", help="batch qualification protocols")
    p.add_argument("kind", choices=("simultaneity", "totality", "consecutiveness"))
    common(p)
    p.add_argument("--universe", help="comma-separated symbols (simultaneity)")
    p.add_argument("--date", type=int, help="cut timestamp, epoch ms")
    p.add_argument("--windows", type=int, help="window count (consecutiveness)")
    p.add_argument("--name")
    p = sub.add_parser("surrogate", help="real vs. null-model qualification rates")
    common(p)
    p.add_argument("--seeds", type=int, help="surrogate seeds per method (>= 20)")
    p.add_argument("--windows", type=int)
    p.add_argument("--name")
    p = sub.add_parser("serve", help="read-only HTTP JSON service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    return parser


_COMMANDS = {
    "bars": cmd_bars,
    "build": cmd_build,
    "render": cmd_render,
    "figures": cmd_figures,
    "qualify": cmd_qualify,
    "shift-test": cmd_shift_test,
    "protocol": cmd_protocol,
    "surrogate": cmd_surrogate,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config,
                             data_root=args.data_root,
                             out_dir=args.out_dir,
                             seed=args.seed,
                             tolerance=args.tolerance,
                             view_bars=args.view_bars)
        return _COMMANDS[args.command](cfg, args)
    except TopnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
