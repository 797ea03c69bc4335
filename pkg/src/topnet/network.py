"""Curve-bundle assembly over a bar series.

A network is the full bundle of rolling last-point regression curves for
one schedule over one series. Only bar midpoints are injected; high/low
never enter the regression input. Curve rank k starts producing values at
bar index lengths[k]-1, so the bundle fans in over the warmup region and is
complete from bar longest-1 onward. Appending bars extends every curve
without touching already-produced values.
"""

from __future__ import annotations

import json
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DataError, IndexOutOfRangeError, SeriesTooShortError
from .ingest import BarSeries, Granularity
from .regress import CurveSchedule, RollingState, compute_schedule

__all__ = [
    "Network",
    "NetworkSlice",
    "PartialNetworkWarning",
    "build_network",
    "write_network",
    "read_network",
]


class PartialNetworkWarning(UserWarning):
    """Series shorter than the longest window; the bundle is incomplete."""


@dataclass
class NetworkSlice:
    """Ordinates of every curve defined at one bar index."""

    t: int
    ranks: np.ndarray      # 1-based curve ranks present at t
    ordinates: np.ndarray  # same length as ranks

    def __len__(self) -> int:
        return self.ranks.size


class Network:
    """Bundle of curves, column-major (one contiguous array per curve)."""

    def __init__(self, schedule: CurveSchedule, mid: np.ndarray,
                 columns: list[np.ndarray], states: list[RollingState],
                 granularity: Granularity | None = None, symbol: str = ""):
        self.schedule = schedule
        self.mid = mid
        self.columns = columns
        self.states = states
        self.granularity = granularity
        self.symbol = symbol

    @property
    def length(self) -> int:
        return self.mid.size

    @property
    def starts(self) -> np.ndarray:
        """First bar index at which each curve is defined."""
        return self.schedule.lengths - 1

    @property
    def complete_from(self) -> int:
        """First bar index where every curve is defined."""
        return int(self.schedule.lengths[-1]) - 1

    @property
    def label(self) -> str:
        return self.schedule.label

    def curve(self, k: int) -> tuple[int, np.ndarray]:
        """(start index, values) of curve rank k+1."""
        return int(self.schedule.lengths[k]) - 1, self.columns[k]

    def slice(self, t: int) -> NetworkSlice:
        if t < 0 or t >= self.length:
            raise IndexOutOfRangeError(f"t={t} outside [0, {self.length})")
        starts = self.starts
        defined = np.nonzero(starts <= t)[0]
        ordinates = np.fromiter(
            (self.columns[k][t - starts[k]] for k in defined),
            dtype=np.float64, count=defined.size)
        return NetworkSlice(t, defined + 1, ordinates)

    def consumed_values(self, t: int) -> int:
        """Series values feeding the slice at t (window-length accounting)."""
        if t < 0 or t >= self.length:
            raise IndexOutOfRangeError(f"t={t} outside [0, {self.length})")
        lengths = self.schedule.lengths
        return int(lengths[lengths - 1 <= t].sum())

    def append(self, more) -> int:
        """Extend with new bars (or raw midpoints); returns new length.

        Existing column values are never recomputed: each curve resumes
        from its saved rolling state, so chunked appends are bit-identical
        to a one-shot build.
        """
        new_mid = more.mid if isinstance(more, BarSeries) else np.asarray(more, dtype=np.float64)
        if new_mid.size == 0:
            return self.length
        self.mid = np.concatenate([self.mid, new_mid])
        upto = self.mid.size
        for k, state in enumerate(self.states):
            fresh = state.extend(self.mid, upto)
            if fresh.size:
                self.columns[k] = np.concatenate([self.columns[k], fresh]) \
                    if self.columns[k].size else fresh
        return self.length


def build_network(source, schedule: CurveSchedule, workers: int = 1,
                  symbol: str = "") -> Network:
    """Compute the full curve bundle from a bar series (midpoints only).

    Curves are independent; with workers > 1 they are computed in parallel
    threads (the regression kernel releases the GIL). Results are placed by
    rank, so the outcome is identical for any worker count.
    """
    if isinstance(source, BarSeries):
        mid = np.ascontiguousarray(source.mid, dtype=np.float64)
        granularity = source.granularity
        symbol = symbol or source.symbol
    else:
        mid = np.ascontiguousarray(source, dtype=np.float64)
        granularity = None
    length = mid.size
    shortest = int(schedule.lengths[0])
    if length < shortest + 1:
        raise SeriesTooShortError(
            f"{length} bars < shortest window {shortest} + 1")
    if length < int(schedule.lengths[-1]):
        warnings.warn(
            f"series has {length} bars, longest window is {schedule.lengths[-1]}; "
            "building a partial network", PartialNetworkWarning, stacklevel=2)

    states = [RollingState(int(n), schedule.order) for n in schedule.lengths]

    def run(state: RollingState) -> np.ndarray:
        return state.extend(mid, length)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            columns = list(pool.map(run, states))
    else:
        columns = [run(s) for s in states]
    return Network(schedule, mid, columns, states, granularity, symbol)


# ---------------------------------------------------------------------------
# Binary round-trip
# ---------------------------------------------------------------------------

_MAGIC = b"TOPNET.NET\x00\x00\x00\x00\x00\x00"  # 16 bytes
_VERSION = 1


def write_network(path, network: Network, meta: dict | None = None) -> None:
    """Compact binary: magic, version, JSON header, midpoints, per-curve
    ordinates, then the per-curve rolling state (so a reloaded network can
    keep appending bit-identically)."""
    sched = network.schedule
    header = {
        "schedule": sched.params(),
        "length": network.length,
        "symbol": network.symbol,
        "granularity": ({"kind": network.granularity.kind,
                         "amount": network.granularity.amount}
                        if network.granularity else None),
        "column_sizes": [int(col.size) for col in network.columns],
    }
    if meta:
        header.update(meta)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<B", _VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(network.mid.astype("<f8").tobytes())
        for col in network.columns:
            fh.write(col.astype("<f8").tobytes())
        for state in network.states:
            fh.write(state._T.astype("<f8").tobytes())
            fh.write(struct.pack("<q", state._steps))
            fh.write(struct.pack("<q", state.next_t))


def read_network(path) -> Network:
    with open(path, "rb") as fh:
        if fh.read(16) != _MAGIC:
            raise DataError(f"{path}: not a network file")
        (version,) = struct.unpack("<B", fh.read(1))
        if version != _VERSION:
            raise DataError(f"{path}: unsupported network version {version}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        sched = compute_schedule(**header["schedule"])
        length = header["length"]
        mid = np.frombuffer(fh.read(8 * length), dtype="<f8").copy()
        columns = []
        for size in header["column_sizes"]:
            columns.append(np.frombuffer(fh.read(8 * size), dtype="<f8").copy())
        states = []
        for k, n in enumerate(sched.lengths):
            state = RollingState(int(n), sched.order)
            state._T = np.frombuffer(fh.read(8 * (sched.order + 1)), dtype="<f8").copy()
            (state._steps,) = struct.unpack("<q", fh.read(8))
            (state.next_t,) = struct.unpack("<q", fh.read(8))
            states.append(state)
    gran = header.get("granularity")
    granularity = Granularity(gran["kind"], gran["amount"]) if gran else None
    return Network(sched, mid, columns, states, granularity, header.get("symbol", ""))
