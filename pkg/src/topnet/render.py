"""Deterministic chart rendering.

Curves are rasterized by an internal coverage splatter (no text, no fonts,
no backend state), so identical inputs give byte-identical PNGs on any
run. Long-window curves are drawn beneath short-window ones in distinct
colors, bars as vertical low-high segments, detected figures as optional
polyline overlays. An SVG path writer covers the vector case; golden tests
pin the raster path only.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field as dc_field

import numpy as np
from PIL import Image

from .errors import EmptyViewError
from .figures import CharacteristicFigure, View, resolve_view
from .ingest import BarSeries
from .network import Network

__all__ = ["RenderStyle", "render_chart", "render_chart_svg", "chart_filename"]

_KIND_COLORS = {
    "cord": (214, 39, 40),
    "envelope": (255, 152, 0),
    "boltrope": (148, 33, 206),
}


@dataclass(frozen=True)
class RenderStyle:
    width: int = 960
    height: int = 540
    short_color: tuple = (44, 160, 44)   # short-window curves: green
    long_color: tuple = (31, 80, 180)    # long-window curves: blue
    bar_color: tuple = (25, 25, 25)
    background: tuple = (255, 255, 255)
    short_rank_threshold: int | None = None  # default: count // 3
    figure_overlay: bool = False
    ink_gain: float = 0.85  # coverage -> opacity saturation rate

    def __post_init__(self):
        if self.width < 64 or self.height < 64:
            raise ValueError("render dimensions must be at least 64x64")


def _splat_polyline(cov: np.ndarray, x_px: np.ndarray, y_px: np.ndarray) -> None:
    """Stroke a polyline sampled once per pixel column: each column gets
    unit mass spread uniformly over the rows its segment crosses."""
    h = cov.shape[0]
    y0 = np.empty_like(y_px)
    y0[0] = y_px[0]
    y0[1:] = y_px[:-1]
    lo = np.minimum(y0, y_px)
    hi = np.maximum(y0, y_px)
    r_lo = np.clip(np.floor(lo).astype(np.int64), 0, h - 1)
    r_hi = np.clip(np.floor(hi).astype(np.int64), 0, h - 1)
    lens = r_hi - r_lo + 1
    rows = np.repeat(r_lo, lens) + _ragged_arange(lens)
    cols = np.repeat(x_px, lens)
    weights = np.repeat(1.0 / lens, lens)
    np.add.at(cov, (rows, cols), weights)


def _ragged_arange(lens: np.ndarray) -> np.ndarray:
    """concatenate([arange(l) for l in lens]) without the Python loop."""
    total = int(lens.sum())
    out = np.ones(total, dtype=np.int64)
    out[0] = 0
    ends = np.cumsum(lens)[:-1]
    out[ends] = 1 - lens[:-1]
    return np.cumsum(out)


def _curve_coverage(network: Network, view: View, style: RenderStyle,
                    ranks_mask: np.ndarray) -> np.ndarray:
    """Accumulated stroke coverage of the selected curve ranks."""
    w, h = style.width, style.height
    cov = np.zeros((h, w))
    C = view.columns
    x = np.arange(w)
    # fractional bar coordinate sampled at each pixel-column center
    tb = view.t0 + (x + 0.5) * C / w - 0.5
    starts = network.starts
    y_scale = h / view.price_range
    for k, col in enumerate(network.columns):
        if not ranks_mask[k] or col.size == 0:
            continue
        first = max(int(starts[k]), view.t0)
        last = view.t1 - 1
        if first > last:
            continue
        sel = (tb >= first) & (tb <= last)
        if not np.any(sel):
            continue
        t_local = tb[sel] - starts[k]
        base = np.clip(np.floor(t_local).astype(np.int64), 0, col.size - 1)
        nxt = np.minimum(base + 1, col.size - 1)
        frac = t_local - base
        y = col[base] * (1.0 - frac) + col[nxt] * frac
        y_px = (view.hi - y) * y_scale - 0.5
        _splat_polyline(cov, x[sel], np.clip(y_px, 0.0, h - 1.0))
    return cov


def _blend(img: np.ndarray, color: tuple, alpha: np.ndarray) -> None:
    a = alpha[..., None]
    img *= (1.0 - a)
    img += a * np.asarray(color, dtype=np.float64)


def render_chart(network: Network, bars: BarSeries | None,
                 figures: list[CharacteristicFigure] | None = None,
                 style: RenderStyle = RenderStyle(),
                 view: View | None = None) -> bytes:
    """Render one chart to PNG bytes. Inputs are never mutated; identical
    inputs produce identical bytes."""
    if view is None:
        view = resolve_view(network, bars)
    if view.columns <= 0:
        raise EmptyViewError("nothing to draw")
    w, h = style.width, style.height
    count = network.schedule.count
    threshold = style.short_rank_threshold
    if threshold is None:
        threshold = count // 3
    ranks = np.arange(1, count + 1)
    cov_long = _curve_coverage(network, view, style, ranks > threshold)
    cov_short = _curve_coverage(network, view, style, ranks <= threshold)

    img = np.empty((h, w, 3))
    img[:] = np.asarray(style.background, dtype=np.float64)
    _blend(img, style.long_color, 1.0 - np.exp(-style.ink_gain * cov_long))
    _blend(img, style.short_color, 1.0 - np.exp(-style.ink_gain * cov_short))

    if bars is not None and len(bars):
        y_scale = h / view.price_range
        x_of = lambda t: ((np.asarray(t) - view.t0 + 0.5) * w / view.columns - 0.5)
        for t in range(view.t0, view.t1):
            xc = int(np.clip(np.round(x_of(t)), 0, w - 1))
            top = (view.hi - bars.high[t]) * y_scale - 0.5
            bot = (view.hi - bars.low[t]) * y_scale - 0.5
            r0 = int(np.clip(np.floor(min(top, bot)), 0, h - 1))
            r1 = int(np.clip(np.floor(max(top, bot)), 0, h - 1))
            img[r0:r1 + 1, xc] = np.asarray(style.bar_color, dtype=np.float64)

    if style.figure_overlay and figures:
        for fig in figures:
            color = _KIND_COLORS.get(fig.kind, (0, 0, 0))
            xs = ((fig.columns - view.t0 + 0.5) * w / view.columns - 0.5)
            px0 = int(np.clip(np.ceil(xs[0]), 0, w - 1))
            px1 = int(np.clip(np.floor(xs[-1]), 0, w - 1))
            if px1 < px0:
                continue
            x = np.arange(px0, px1 + 1)
            t_at = view.t0 + (x + 0.5) * view.columns / w - 0.5
            y = fig.ordinate_at(t_at)
            y_px = np.clip((view.hi - y) * h / view.price_range - 0.5, 0.0, h - 1.0)
            stroke = np.zeros((h, w))
            _splat_polyline(stroke, x, y_px)
            _blend(img, color, np.clip(stroke * 2.0, 0.0, 1.0))

    png = io.BytesIO()
    Image.fromarray(np.clip(np.rint(img), 0, 255).astype(np.uint8), "RGB").save(
        png, format="PNG")
    return png.getvalue()


def render_chart_svg(network: Network, bars: BarSeries | None,
                     figures: list[CharacteristicFigure] | None = None,
                     style: RenderStyle = RenderStyle(),
                     view: View | None = None,
                     max_points: int = 512) -> str:
    """Vector variant: curve polylines (decimated to max_points per curve),
    bar segments and figure overlays. Text-free so it renders identically
    everywhere, but goldens pin the raster output only."""
    if view is None:
        view = resolve_view(network, bars)
    w, h = style.width, style.height

    def x_of(t):
        return (np.asarray(t, dtype=np.float64) - view.t0 + 0.5) * w / view.columns

    def y_of(y):
        return (view.hi - np.asarray(y, dtype=np.float64)) * h / view.price_range

    def rgb(c):
        return f"rgb({c[0]},{c[1]},{c[2]})"

    def poly(xs, ys, color, width_px, opacity):
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
        return (f'<polyline fill="none" stroke="{color}" '
                f'stroke-width="{width_px}" stroke-opacity="{opacity:.2f}" '
                f'points="{pts}"/>')

    count = network.schedule.count
    threshold = style.short_rank_threshold
    if threshold is None:
        threshold = count // 3
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect width="{w}" height="{h}" fill="{rgb(style.background)}"/>',
    ]
    starts = network.starts
    order = [k for k in range(count) if k + 1 > threshold] + \
            [k for k in range(count) if k + 1 <= threshold]
    for k in order:
        col = network.columns[k]
        a = max(int(starts[k]), view.t0)
        if col.size == 0 or a >= view.t1:
            continue
        seg = col[a - starts[k]:view.t1 - starts[k]]
        t = np.arange(a, a + seg.size)
        if seg.size > max_points:
            idx = np.linspace(0, seg.size - 1, max_points).astype(np.int64)
            seg, t = seg[idx], t[idx]
        color = style.short_color if k + 1 <= threshold else style.long_color
        parts.append(poly(x_of(t), y_of(seg), rgb(color), 1, 0.35))
    if bars is not None and len(bars):
        for t in range(view.t0, view.t1):
            x = float(x_of(t))
            parts.append(
                f'<line x1="{x:.2f}" y1="{float(y_of(bars.low[t])):.2f}" '
                f'x2="{x:.2f}" y2="{float(y_of(bars.high[t])):.2f}" '
                f'stroke="{rgb(style.bar_color)}" stroke-width="1"/>')
    if style.figure_overlay and figures:
        for fig in figures:
            color = _KIND_COLORS.get(fig.kind, (0, 0, 0))
            parts.append(poly(x_of(fig.columns), y_of(fig.ordinates),
                              rgb(color), 2, 0.9))
    parts.append("</svg>")
    return "\n".join(parts)


def chart_filename(symbol: str, granularity: str, subtype: str,
                   view: View, ext: str = "png") -> str:
    return f"{symbol}_{granularity}_{subtype}_{view.t0}-{view.t1}.{ext}"
