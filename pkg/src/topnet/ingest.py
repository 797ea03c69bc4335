"""Tick loading and bar aggregation.

A bar summarizes a group of ticks by its midpoint and half-range, so the
band [mid - half_range, mid + half_range] covers exactly the values seen in
the group. Only the midpoint ever feeds the regression engine; high/low are
kept for extrema detection and drawing. Two grouping rules are supported:
fixed time periods and normalized volume bars (close a bar once cumulative
volume reaches a quota).
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .errors import (
    DataError,
    EmptyInputError,
    MalformedRowError,
    NonMonotonicTimestampError,
)

__all__ = [
    "Tick",
    "Ticks",
    "Bar",
    "BarSeries",
    "Granularity",
    "CsvSpec",
    "load_ticks",
    "aggregate_time_bars",
    "aggregate_nvb",
    "write_bar_cache",
    "read_bar_cache",
    "MINUTE_MS",
]

MINUTE_MS = 60_000


@dataclass(frozen=True)
class Tick:
    timestamp: int  # epoch milliseconds
    value: float
    volume: float


@dataclass
class Ticks:
    """Column-oriented tick storage (timestamps non-decreasing)."""

    timestamp: np.ndarray  # int64 epoch ms
    value: np.ndarray      # float64
    volume: np.ndarray     # float64, >= 0

    def __len__(self) -> int:
        return self.timestamp.size

    def __getitem__(self, i: int) -> Tick:
        return Tick(int(self.timestamp[i]), float(self.value[i]), float(self.volume[i]))


@dataclass(frozen=True)
class Granularity:
    """Bar grouping rule: kind 'time' (amount = period in ms) or 'nvb'
    (amount = volume quota)."""

    kind: str
    amount: float

    @property
    def label(self) -> str:
        if self.kind == "time":
            ms = int(self.amount)
            if ms % MINUTE_MS == 0:
                return f"{ms // MINUTE_MS}m"
            return f"{ms}ms"
        return f"nvb{self.amount:g}"


@dataclass(frozen=True)
class Bar:
    index: int
    t_start: int
    t_end: int
    mid: float
    half_range: float
    volume: float

    @property
    def high(self) -> float:
        return self.mid + self.half_range

    @property
    def low(self) -> float:
        return self.mid - self.half_range


@dataclass
class BarSeries:
    """Contiguous ordered bars of one granularity, column-oriented."""

    t_start: np.ndarray     # int64
    t_end: np.ndarray       # int64
    mid: np.ndarray         # float64
    half_range: np.ndarray  # float64, >= 0
    volume: np.ndarray      # float64, >= 0
    granularity: Granularity
    symbol: str = ""

    def __len__(self) -> int:
        return self.mid.size

    def __getitem__(self, i: int) -> Bar:
        if i < 0:
            i += len(self)
        return Bar(i, int(self.t_start[i]), int(self.t_end[i]), float(self.mid[i]),
                   float(self.half_range[i]), float(self.volume[i]))

    @property
    def high(self) -> np.ndarray:
        return self.mid + self.half_range

    @property
    def low(self) -> np.ndarray:
        return self.mid - self.half_range

    def window(self, t0: int, t1: int) -> "BarSeries":
        """Bars with index in [t0, t1)."""
        return BarSeries(self.t_start[t0:t1], self.t_end[t0:t1], self.mid[t0:t1],
                         self.half_range[t0:t1], self.volume[t0:t1],
                         self.granularity, self.symbol)


# ---------------------------------------------------------------------------
# CSV tick input
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CsvSpec:
    """Column mapping for tick CSVs.

    Columns may be header names (file must then have a header row) or
    0-based integer positions (headerless file). `timestamp_unit` is 'ms'
    or 's'; seconds are converted to epoch milliseconds on load.
    """

    timestamp: Union[str, int] = "timestamp"
    value: Union[str, int] = "value"
    volume: Union[str, int] = "volume"
    delimiter: str = ","
    timestamp_unit: str = "ms"


def _open_stream(source) -> io.TextIOBase:
    if isinstance(source, (str, Path)):
        return open(source, "r", newline="")
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8")


def load_ticks(source, spec: CsvSpec = CsvSpec()) -> Ticks:
    """Parse ticks from a CSV stream, path or bytes.

    Rows must be in non-decreasing timestamp order. A row with a missing
    field, a non-finite value, or negative volume raises MalformedRowError
    with its 1-based line number; a backwards timestamp raises
    NonMonotonicTimestampError.
    """
    by_name = isinstance(spec.timestamp, str)
    scale = 1000 if spec.timestamp_unit == "s" else 1
    ts_list: list[int] = []
    val_list: list[float] = []
    vol_list: list[float] = []
    stream = _open_stream(source)
    try:
        reader = csv.reader(stream, delimiter=spec.delimiter)
        if by_name:
            try:
                header = next(reader)
            except StopIteration:
                raise EmptyInputError("empty tick stream") from None
            names = [h.strip() for h in header]
            try:
                cols = (names.index(spec.timestamp), names.index(spec.value),
                        names.index(spec.volume))
            except ValueError as exc:
                raise MalformedRowError(1, f"missing column: {exc}") from None
            first_line = 2
        else:
            cols = (spec.timestamp, spec.value, spec.volume)
            first_line = 1
        prev_ts = None
        for line, row in enumerate(reader, start=first_line):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue  # blank line
            try:
                ts = int(float(row[cols[0]])) * scale
                val = float(row[cols[1]])
                vol = float(row[cols[2]])
            except (ValueError, IndexError) as exc:
                raise MalformedRowError(line, str(exc)) from None
            if not math.isfinite(val):
                raise MalformedRowError(line, f"non-finite value {row[cols[1]]!r}")
            if not math.isfinite(vol) or vol < 0:
                raise MalformedRowError(line, f"bad volume {row[cols[2]]!r}")
            if prev_ts is not None and ts < prev_ts:
                raise NonMonotonicTimestampError(line)
            prev_ts = ts
            ts_list.append(ts)
            val_list.append(val)
            vol_list.append(vol)
    finally:
        if isinstance(source, (str, Path)):
            stream.close()
    return Ticks(np.asarray(ts_list, dtype=np.int64),
                 np.asarray(val_list, dtype=np.float64),
                 np.asarray(vol_list, dtype=np.float64))


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

def _group_stats(values: np.ndarray, volumes: np.ndarray, starts: np.ndarray,
                 ends: np.ndarray, mid_mode: str):
    """Per-group midpoint / half-range / volume for groups [starts_i, ends_i)."""
    highs = np.maximum.reduceat(values, starts)
    lows = np.minimum.reduceat(values, starts)
    cum_vol = np.concatenate(([0.0], np.cumsum(volumes)))
    vol = cum_vol[ends] - cum_vol[starts]
    if mid_mode == "midrange":
        mid = (highs + lows) / 2.0
    elif mid_mode == "vwap":
        # optional asymmetric mode; the symmetric band identity
        # high == mid + half_range no longer holds per group
        cum_pv = np.concatenate(([0.0], np.cumsum(values * volumes)))
        pv = cum_pv[ends] - cum_pv[starts]
        counts = ends - starts
        cum_v = np.concatenate(([0.0], np.cumsum(values)))
        plain_mean = (cum_v[ends] - cum_v[starts]) / counts
        mid = np.where(vol > 0, pv / np.where(vol > 0, vol, 1.0), plain_mean)
    else:
        raise ValueError(f"unknown mid_mode {mid_mode!r}")
    half = (highs - lows) / 2.0
    return mid, half, vol


def aggregate_time_bars(ticks: Ticks, period_ms: int,
                        mid_mode: str = "midrange") -> BarSeries:
    """Group ticks into fixed periods; empty periods emit no bar."""
    if period_ms <= 0:
        raise ValueError("period must be positive")
    if len(ticks) == 0:
        raise EmptyInputError("no ticks")
    bucket = ticks.timestamp // period_ms
    change = np.nonzero(np.diff(bucket))[0] + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [len(ticks)]))
    mid, half, vol = _group_stats(ticks.value, ticks.volume, starts, ends, mid_mode)
    t_start = bucket[starts] * period_ms
    return BarSeries(t_start.astype(np.int64), (t_start + period_ms).astype(np.int64),
                     mid, half, vol, Granularity("time", float(period_ms)))


def aggregate_nvb(ticks: Ticks, quota: float, mid_mode: str = "midrange") -> BarSeries:
    """Normalized volume bars: close a bar once cumulative volume >= quota.

    The tick that reaches the quota closes the bar. A trailing partial group
    is emitted as a final bar so that total bar volume always equals total
    tick volume.
    """
    if quota <= 0:
        raise ValueError("quota must be positive")
    if len(ticks) == 0:
        raise EmptyInputError("no ticks")
    cum = np.cumsum(ticks.volume)
    boundaries = []
    start = 0
    while start < len(ticks):
        target = (cum[start - 1] if start else 0.0) + quota
        idx = int(np.searchsorted(cum, target, side="left"))
        idx = min(idx, len(ticks) - 1)
        boundaries.append((start, idx + 1))
        start = idx + 1
    starts = np.asarray([b[0] for b in boundaries])
    ends = np.asarray([b[1] for b in boundaries])
    mid, half, vol = _group_stats(ticks.value, ticks.volume, starts, ends, mid_mode)
    return BarSeries(ticks.timestamp[starts].astype(np.int64),
                     ticks.timestamp[ends - 1].astype(np.int64),
                     mid, half, vol, Granularity("nvb", float(quota)))


# ---------------------------------------------------------------------------
# Bar cache (columnar binary)
# ---------------------------------------------------------------------------

_MAGIC = b"TOPNET.BARS\x00\x00\x00\x00\x00"  # 16 bytes
_VERSION = 1


def write_bar_cache(path, series: BarSeries, meta: dict | None = None) -> None:
    """Columnar binary: 16-byte magic, version byte, JSON header, then the
    five little-endian column arrays."""
    header = {
        "count": len(series),
        "granularity": {"kind": series.granularity.kind,
                        "amount": series.granularity.amount},
        "symbol": series.symbol,
    }
    if meta:
        header.update(meta)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<B", _VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(series.t_start.astype("<i8").tobytes())
        fh.write(series.t_end.astype("<i8").tobytes())
        fh.write(series.mid.astype("<f8").tobytes())
        fh.write(series.half_range.astype("<f8").tobytes())
        fh.write(series.volume.astype("<f8").tobytes())


def read_bar_cache(path) -> tuple[BarSeries, dict]:
    with open(path, "rb") as fh:
        if fh.read(16) != _MAGIC:
            raise DataError(f"{path}: not a bar cache file")
        (version,) = struct.unpack("<B", fh.read(1))
        if version != _VERSION:
            raise DataError(f"{path}: unsupported bar cache version {version}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        count = header["count"]
        cols = []
        for dtype in ("<i8", "<i8", "<f8", "<f8", "<f8"):
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise DataError(f"{path}: truncated bar cache")
            cols.append(np.frombuffer(raw, dtype=dtype).copy())
    gran = Granularity(header["granularity"]["kind"], header["granularity"]["amount"])
    series = BarSeries(cols[0], cols[1], cols[2], cols[3], cols[4], gran,
                       header.get("symbol", ""))
    return series, header
