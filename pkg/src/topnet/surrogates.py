"""Null-model series used to control for construction bias.

Figures are detected in bundles built from the same prices they are scored
against, so raw interaction counts cannot distinguish structure from
self-reference. Each surrogate method destroys a different aspect of the
ordering while preserving marginal properties:

- shuffled-returns: permutes log-returns of the midpoints (exact multiset
  preserved); half-range and volume travel with their source bar.
- phase-randomized: randomizes Fourier phases of the midpoint series,
  preserving the amplitude spectrum; half-range and volume stay in place.
- gbm-fit: geometric Brownian motion with drift/volatility fitted to the
  midpoint log-returns; half-range and volume bootstrapped per bar.
"""

from __future__ import annotations

import numpy as np

from .errors import SeriesTooShortError
from .ingest import BarSeries

__all__ = ["make_surrogate", "SURROGATE_METHODS"]

SURROGATE_METHODS = ("shuffled-returns", "phase-randomized", "gbm-fit")

_MIN_LEN = 16


def make_surrogate(series: BarSeries, method: str, seed: int) -> BarSeries:
    """Deterministic surrogate of `series` (same length, same time grid)."""
    n = len(series)
    if n < _MIN_LEN:
        raise SeriesTooShortError(f"{n} bars < {_MIN_LEN}")
    if method not in SURROGATE_METHODS:
        raise ValueError(f"unknown surrogate method {method!r}")
    rng = np.random.default_rng(seed)
    mid = series.mid
    half = series.half_range.copy()
    vol = series.volume.copy()

    if method == "shuffled-returns":
        if np.any(mid <= 0):
            raise ValueError("shuffled-returns needs positive midpoints")
        returns = np.diff(np.log(mid))
        perm = rng.permutation(n - 1)
        new_mid = np.empty(n)
        new_mid[0] = mid[0]
        new_mid[1:] = mid[0] * np.exp(np.cumsum(returns[perm]))
        # half-range/volume accompany the bar whose return moved
        half[1:] = series.half_range[1:][perm]
        vol[1:] = series.volume[1:][perm]
        mid = new_mid
    elif method == "phase-randomized":
        spectrum = np.fft.rfft(mid)
        k = spectrum.size
        phases = rng.uniform(0.0, 2.0 * np.pi, size=k)
        rotated = np.abs(spectrum) * np.exp(1j * phases)
        rotated[0] = spectrum[0]
        if n % 2 == 0:
            rotated[-1] = spectrum[-1]  # keep the Nyquist bin real
        mid = np.fft.irfft(rotated, n=n)
    else:  # gbm-fit
        if np.any(mid <= 0):
            raise ValueError("gbm-fit needs positive midpoints")
        returns = np.diff(np.log(mid))
        mu = float(np.mean(returns))
        sigma = float(np.std(returns, ddof=1))
        sim = rng.normal(mu, sigma, size=n - 1)
        new_mid = np.empty(n)
        new_mid[0] = mid[0]
        new_mid[1:] = mid[0] * np.exp(np.cumsum(sim))
        draw = rng.integers(0, n, size=n)
        half = series.half_range[draw]
        vol = series.volume[draw]
        mid = new_mid

    return BarSeries(series.t_start.copy(), series.t_end.copy(), mid, half, vol,
                     series.granularity, series.symbol)
