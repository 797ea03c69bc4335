"""Run configuration: defaults, file loading, CLI overrides, hashing.

Every report embeds the effective configuration and its hash, so a report
can always be traced back to the exact knobs that produced it. The hash
covers only semantic content (sorted canonical JSON), never timestamps or
output paths.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .chart import AnalysisSettings
from .errors import ConfigError
from .figures import FigureParams
from .ingest import CsvSpec, MINUTE_MS, Granularity
from .regress import CurveSchedule, compute_schedule, load_presets

__all__ = ["RunConfig", "parse_resolution", "DATA_ROOT_ENV"]

DATA_ROOT_ENV = "TOPNET_DATA_ROOT"


def parse_resolution(text: str) -> Granularity:
    """'10m' / '600000ms' time bars, or 'nvb250' volume bars."""
    text = text.strip().lower()
    try:
        if text.startswith("nvb"):
            return Granularity("nvb", float(text[3:]))
        if text.endswith("ms"):
            return Granularity("time", float(int(text[:-2])))
        if text.endswith("m"):
            return Granularity("time", float(int(text[:-1]) * MINUTE_MS))
    except ValueError:
        pass
    raise ConfigError(f"cannot parse resolution {text!r} (want e.g. 10m, 600000ms, nvb250)")


@dataclass(frozen=True)
class RunConfig:
    data_root: str = "."
    out_dir: str = "out"
    seed: int = 0
    resolution: str = "10m"
    subtype: str = "TN3"
    view_bars: int = 400
    include_warmup: bool = False
    tolerance: float = 0.02
    prominence: float = 0.005
    separation: int = 3
    fraction_threshold: float = 0.5
    min_extrema: int = 8
    workers: int = 1
    figure_params: dict = field(default_factory=dict)   # FigureParams overrides
    presets: dict = field(default_factory=dict)         # schedule preset overrides
    epsilon: float = 0.001
    window_count: int = 4
    surrogate_seeds: int = 20
    surrogate_methods: tuple = ("shuffled-returns", "phase-randomized")
    date: int | None = None            # protocol cut timestamp (epoch ms)
    render_width: int = 960
    render_height: int = 540
    figure_overlay: bool = True
    csv: dict = field(default_factory=dict)             # CsvSpec overrides

    # -- derived objects --------------------------------------------------

    def csv_spec(self) -> CsvSpec:
        return CsvSpec(**self.csv) if self.csv else CsvSpec()

    def make_figure_params(self) -> FigureParams:
        return FigureParams(**self.figure_params) if self.figure_params else FigureParams()

    def settings(self) -> AnalysisSettings:
        return AnalysisSettings(
            figure_params=self.make_figure_params(),
            tolerance=self.tolerance,
            prominence=self.prominence,
            separation=self.separation,
            fraction_threshold=self.fraction_threshold,
            min_extrema=self.min_extrema,
            view_bars=self.view_bars,
            include_warmup=self.include_warmup,
            workers=self.workers,
        )

    def schedules(self) -> dict[str, CurveSchedule]:
        """Stock presets with any config-file overrides applied."""
        out = load_presets()
        for name, params in self.presets.items():
            out[name] = compute_schedule(**params)
        return out

    def schedule(self, name: str | None = None) -> CurveSchedule:
        name = name or self.subtype
        table = self.schedules()
        if name not in table:
            raise ConfigError(f"unknown subtype {name!r}; have {sorted(table)}")
        return table[name]

    def granularity(self) -> Granularity:
        return parse_resolution(self.resolution)

    # -- provenance --------------------------------------------------------

    def effective(self) -> dict:
        """Canonical dict of everything a result depends on (paths and
        output locations excluded: they do not change any number)."""
        d = {
            "seed": self.seed,
            "resolution": self.resolution,
            "subtype": self.subtype,
            "view_bars": self.view_bars,
            "include_warmup": self.include_warmup,
            "tolerance": self.tolerance,
            "prominence": self.prominence,
            "separation": self.separation,
            "fraction_threshold": self.fraction_threshold,
            "min_extrema": self.min_extrema,
            "figure_params": self.make_figure_params().to_dict(),
            "presets": {k: v.params() for k, v in sorted(self.schedules().items())},
            "epsilon": self.epsilon,
            "window_count": self.window_count,
            "surrogate_seeds": self.surrogate_seeds,
            "surrogate_methods": list(self.surrogate_methods),
            "date": self.date,
            "render": [self.render_width, self.render_height, self.figure_overlay],
        }
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.effective(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    # -- construction ------------------------------------------------------

    @classmethod
    def load(cls, path: str | Path | None = None, **overrides) -> "RunConfig":
        data: dict = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text())
            except FileNotFoundError:
                raise ConfigError(f"config file not found: {path}") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"bad config file {path}: {exc}") from None
        data.update({k: v for k, v in overrides.items() if v is not None})
        if "surrogate_methods" in data:
            data["surrogate_methods"] = tuple(data["surrogate_methods"])
        env_root = os.environ.get(DATA_ROOT_ENV)
        if env_root and "data_root" not in data:
            data["data_root"] = env_root
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})
