"""Read-only HTTP JSON service for the viewer.

GET endpoints expose instruments, networks (decimated to the viewport),
figures with extrapolations, extrema, interactions, shift tests and stored
reports over precomputed or on-demand-cached artifacts. The single
documented write exception is the prediction journal (POST /journal),
persisted as JSON lines under the data root.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request

from .chart import ChartAnalysis, analyze_window
from .config import RunConfig, parse_resolution
from .errors import TopnetError
from .figures import extrapolate_figure
from .ingest import aggregate_nvb, aggregate_time_bars, load_ticks
from .interact import detect_extrema, score_interactions, qualify_chart
from .network import build_network
from .validate import shift_test

__all__ = ["create_app"]


class _Workbench:
    """Lazy per-process caches over the data root. Bars and networks are
    immutable once built; a lock serializes builds."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.root = Path(cfg.data_root)
        self._lock = threading.Lock()
        self._ticks: dict[str, object] = {}
        self._bars: dict[tuple, object] = {}
        self._networks: dict[tuple, object] = {}
        self._analyses: dict[tuple, ChartAnalysis] = {}

    def instruments(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.csv"))

    def ticks(self, symbol: str):
        with self._lock:
            if symbol not in self._ticks:
                path = self.root / f"{symbol}.csv"
                if not path.exists():
                    raise HTTPException(404, f"unknown instrument {symbol!r}")
                self._ticks[symbol] = load_ticks(path, self.cfg.csv_spec())
            return self._ticks[symbol]

    def bars(self, symbol: str, resolution: str):
        key = (symbol, resolution)
        with self._lock:
            if key in self._bars:
                return self._bars[key]
        ticks = self.ticks(symbol)
        gran = parse_resolution(resolution)
        if gran.kind == "time":
            series = aggregate_time_bars(ticks, int(gran.amount))
        else:
            series = aggregate_nvb(ticks, gran.amount)
        series.symbol = symbol
        with self._lock:
            self._bars[key] = series
        return series

    def network(self, symbol: str, resolution: str, subtype: str):
        key = (symbol, resolution, subtype)
        with self._lock:
            if key in self._networks:
                return self._networks[key]
        bars = self.bars(symbol, resolution)
        net = build_network(bars, self.cfg.schedule(subtype),
                            workers=self.cfg.workers, symbol=symbol)
        with self._lock:
            self._networks[key] = net
        return net

    def analysis(self, symbol: str, resolution: str, subtype: str,
                 t0: int | None, t1: int | None) -> ChartAnalysis:
        net = self.network(symbol, resolution, subtype)
        bars = self.bars(symbol, resolution)
        hi = net.length if t1 is None else min(t1, net.length)
        lo = max(0, net.complete_from) if t0 is None else max(t0, 0)
        if t0 is None:
            lo = max(lo, hi - self.cfg.view_bars)
        key = (symbol, resolution, subtype, lo, hi)
        with self._lock:
            if key in self._analyses:
                return self._analyses[key]
        analysis = analyze_window(net, bars, lo, hi, self.cfg.settings(), symbol)
        with self._lock:
            if len(self._analyses) > 64:
                self._analyses.clear()
            self._analyses[key] = analysis
        return analysis


def _decimate(start: int, values: np.ndarray, t0: int, t1: int, px: int):
    a = max(start, t0)
    if a >= t1 or values.size == 0:
        return None
    seg = values[a - start:t1 - start]
    t = np.arange(a, a + seg.size)
    if seg.size > px:
        idx = np.linspace(0, seg.size - 1, px).astype(np.int64)
        seg, t = seg[idx], t[idx]
    return t.tolist(), [float(v) for v in seg]


def create_app(cfg: RunConfig) -> FastAPI:
    app = FastAPI(title="topnet service")
    bench = _Workbench(cfg)
    journal_path = Path(cfg.data_root) / "journal.jsonl"
    journal_lock = threading.Lock()

    @app.exception_handler(TopnetError)
    async def _topnet_error(_, exc: TopnetError):
        raise HTTPException(422, str(exc))

    @app.get("/instruments")
    def instruments():
        return {"instruments": bench.instruments(),
                "config_hash": cfg.config_hash()}

    @app.get("/network")
    def network(symbol: str, res: str = Query(default=None),
                subtype: str = Query(default=None),
                from_: int | None = Query(default=None, alias="from"),
                to: int | None = Query(default=None),
                px: int = 800):
        res = res or cfg.resolution
        subtype = subtype or cfg.subtype
        try:
            net = bench.network(symbol, res, subtype)
            bars = bench.bars(symbol, res)
        except TopnetError as exc:
            raise HTTPException(422, str(exc))
        t1 = net.length if to is None else min(to, net.length)
        t0 = max(0, net.complete_from if from_ is None else from_)
        if from_ is None:
            t0 = max(t0, t1 - cfg.view_bars)
        if t1 <= t0:
            raise HTTPException(422, "empty window")
        curves = []
        starts = net.starts
        for k, col in enumerate(net.columns):
            dec = _decimate(int(starts[k]), col, t0, t1, max(2, px))
            if dec is not None:
                curves.append({"rank": k + 1, "t": dec[0], "y": dec[1]})
        w = bars.window(t0, t1)
        return {
            "symbol": symbol, "subtype": subtype, "granularity": res,
            "length": net.length, "complete_from": net.complete_from,
            "window": [t0, t1],
            "schedule": net.schedule.params(),
            "bars": {
                "t": list(range(t0, t1)),
                "t_start": w.t_start.tolist(),
                "mid": [float(v) for v in w.mid],
                "half_range": [float(v) for v in w.half_range],
                "volume": [float(v) for v in w.volume],
            },
            "curves": curves,
            "config_hash": cfg.config_hash(),
        }

    def _analysis_or_422(symbol, res, subtype, from_, to) -> ChartAnalysis:
        try:
            return bench.analysis(symbol, res or cfg.resolution,
                                  subtype or cfg.subtype, from_, to)
        except TopnetError as exc:
            raise HTTPException(422, str(exc))

    @app.get("/figures")
    def figures(symbol: str, res: str = None, subtype: str = None,
                from_: int | None = Query(default=None, alias="from"),
                to: int | None = None, horizon: int = 0, order: int = 1):
        a = _analysis_or_422(symbol, res, subtype, from_, to)
        out = []
        for fig in a.figures:
            entry = fig.to_dict()
            if horizon > 0 and fig.span >= 3:
                proj = extrapolate_figure(fig, horizon, order)
                entry["extrapolation"] = [[float(c), float(y)] for c, y in proj]
            out.append(entry)
        return {"symbol": a.symbol, "subtype": a.subtype,
                "window": [a.view.t0, a.view.t1],
                "price_range": [a.view.lo, a.view.hi],
                "figures": out, "config_hash": cfg.config_hash()}

    @app.get("/extrema")
    def extrema(symbol: str, res: str = None, subtype: str = None,
                from_: int | None = Query(default=None, alias="from"),
                to: int | None = None):
        a = _analysis_or_422(symbol, res, subtype, from_, to)
        return {"symbol": a.symbol, "window": [a.view.t0, a.view.t1],
                "extrema": [{"index": e.index, "kind": e.kind,
                             "ordinate": e.ordinate, "prominence": e.prominence}
                            for e in a.extrema],
                "config_hash": cfg.config_hash()}

    @app.get("/interactions")
    def interactions(symbol: str, res: str = None, subtype: str = None,
                     from_: int | None = Query(default=None, alias="from"),
                     to: int | None = None, tau: float | None = None):
        a = _analysis_or_422(symbol, res, subtype, from_, to)
        if tau is None or tau == cfg.tolerance:
            scored, result = a.interactions, a.result
        else:
            scored = score_interactions(a.extrema, a.figures, a.view, tau)
            result = qualify_chart(scored, cfg.fraction_threshold,
                                   cfg.min_extrema, tau)
        return {"symbol": a.symbol, "window": [a.view.t0, a.view.t1],
                "tau": tau if tau is not None else cfg.tolerance,
                "interactions": [i.to_dict() for i in scored],
                "qualification": result.to_dict(),
                "config_hash": cfg.config_hash()}

    @app.get("/shift-test")
    def shift(symbol: str, res: str = None, subtype: str = None,
              from_: int | None = Query(default=None, alias="from"),
              to: int | None = None,
              deltas: str = "0,0.01,-0.01,0.02,-0.02,0.05,-0.05"):
        a = _analysis_or_422(symbol, res, subtype, from_, to)
        try:
            ds = [float(x) for x in deltas.split(",")]
            bars = bench.bars(symbol, res or cfg.resolution)
            result = shift_test(bars, a.figures, a.view, ds, cfg.settings())
        except (ValueError, TopnetError) as exc:
            raise HTTPException(422, str(exc))
        return {"symbol": a.symbol, "window": [a.view.t0, a.view.t1],
                **result.to_dict(), "config_hash": cfg.config_hash()}

    @app.get("/reports/{name}")
    def report(name: str):
        path = Path(cfg.out_dir) / f"{name}.json"
        if not path.exists() or not path.resolve().is_relative_to(
                Path(cfg.out_dir).resolve()):
            raise HTTPException(404, f"no report {name!r}")
        return json.loads(path.read_text())

    @app.get("/journal")
    def journal_list():
        entries = []
        if journal_path.exists():
            for line in journal_path.read_text().splitlines():
                if line.strip():
                    entries.append(json.loads(line))
        return {"entries": entries}

    @app.post("/journal")
    async def journal_append(request: Request):
        entry = await request.json()
        if not isinstance(entry, dict):
            raise HTTPException(422, "journal entry must be an object")
        with journal_lock:
            entries = []
            if journal_path.exists():
                entries = [json.loads(l) for l in
                           journal_path.read_text().splitlines() if l.strip()]
            if "id" not in entry or entry["id"] is None:
                entry["id"] = 1 + max((e.get("id", 0) for e in entries), default=0)
                entries.append(entry)
            else:
                for i, e in enumerate(entries):
                    if e.get("id") == entry["id"]:
                        entries[i] = entry
                        break
                else:
                    entries.append(entry)
            journal_path.write_text(
                "".join(json.dumps(e, sort_keys=True) + "\n" for e in entries))
        return {"ok": True, "id": entry["id"]}

    return app
