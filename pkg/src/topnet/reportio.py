"""Report artifacts: JSON + delimited CSV + plain text, with a matplotlib
summary figure rendered next to them. No artifact carries a timestamp, so
re-running with the same config hash reproduces files byte for byte."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .validate import ProtocolReport, ShiftTestResult, SurrogateReport

__all__ = ["write_report", "report_paths"]


def report_paths(out_dir, name: str) -> dict[str, Path]:
    base = Path(out_dir)
    return {ext: base / f"{name}.{ext}" for ext in ("json", "csv", "txt", "png")}


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _shift_rows(result: ShiftTestResult):
    header = ["delta", "interacting"]
    rows = [[d, c] for d, c in zip(result.deltas, result.counts)]
    return header, rows


def _protocol_rows(report: ProtocolReport):
    header = ["symbol", "subtype", "granularity", "window_start", "window_end",
              "extrema", "interacting", "fraction", "verdict"]
    rows = [[c["symbol"], c["subtype"], c["granularity"], c["window"][0],
             c["window"][1], c["extrema"], c["interacting"],
             f"{c['fraction']:.6f}", c["verdict"]] for c in report.charts]
    return header, rows


def _surrogate_rows(report: SurrogateReport):
    header = ["series", "method", "seed", "rate"]
    rows = [["real", "-", "-", f"{report.real_rate:.6f}"]]
    for method, stats in sorted(report.methods.items()):
        for seed, rate in zip(report.seeds, stats["rates"]):
            rows.append(["surrogate", method, seed, f"{rate:.6f}"])
    return header, rows


def _plot_shift(result: ShiftTestResult, path: Path) -> None:
    order = sorted(range(len(result.deltas)), key=lambda i: result.deltas[i])
    xs = [result.deltas[i] for i in order]
    ys = [result.counts[i] for i in order]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(xs, ys, "o-", color="#1f50b4")
    ax.axvline(0.0, color="#999", lw=0.8)
    ax.set_xlabel("vertical shift (fraction of view range)")
    ax.set_ylabel("interacting extrema")
    ax.set_title("interactions vs. shift")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _plot_protocol(report: ProtocolReport, path: Path) -> None:
    counts = {"qualifies": 0, "fails": 0, "not-assessable": 0}
    for c in report.charts:
        counts[c["verdict"]] += 1
    fig, ax = plt.subplots(figsize=(6, 3.5))
    labels = list(counts)
    ax.bar(labels, [counts[k] for k in labels],
           color=["#2ca02c", "#d62728", "#999999"])
    ax.set_ylabel("charts")
    ax.set_title(f"{report.protocol}: rate {report.qualification_rate:.2f}, "
                 f"p={report.p_value:.3g} at eps={report.epsilon:g}")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _plot_surrogate(report: SurrogateReport, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    data = [stats["rates"] for _, stats in sorted(report.methods.items())]
    labels = [m for m, _ in sorted(report.methods.items())]
    if data:
        ax.boxplot(data, tick_labels=labels)
    ax.axhline(report.real_rate, color="#d62728", lw=1.5,
               label=f"real rate {report.real_rate:.2f}")
    ax.set_ylabel("qualification rate")
    ax.set_title("real vs. surrogate qualification")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _text_summary(kind: str, payload: dict) -> str:
    lines = [f"{kind} report (config {payload.get('config_hash', '?')})"]
    skip = {"charts", "real_charts", "settings", "methods"}
    for key in sorted(payload):
        if key in skip:
            continue
        lines.append(f"  {key}: {payload[key]}")
    if "methods" in payload:
        for method, stats in sorted(payload["methods"].items()):
            lines.append(f"  {method}: mean {stats['mean']:.4f} "
                         f"std {stats['std']:.4f} gap {stats['rate_gap']:+.4f}")
    return "\n".join(lines) + "\n"


def write_report(out_dir, name: str, report, config_hash: str,
                 extra: dict | None = None) -> dict[str, Path]:
    """Write <name>.{json,csv,txt,png} for a shift-test / protocol /
    surrogate result. Returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = report_paths(out, name)
    payload = report.to_dict()
    payload["config_hash"] = config_hash
    if extra:
        payload.update(extra)
    if isinstance(report, ShiftTestResult):
        kind = "shift-test"
        header, rows = _shift_rows(report)
        _plot_shift(report, paths["png"])
    elif isinstance(report, ProtocolReport):
        kind = f"protocol/{report.protocol}"
        header, rows = _protocol_rows(report)
        _plot_protocol(report, paths["png"])
    elif isinstance(report, SurrogateReport):
        kind = "surrogate"
        header, rows = _surrogate_rows(report)
        _plot_surrogate(report, paths["png"])
    else:
        raise TypeError(f"unsupported report type {type(report)!r}")
    _write_json(paths["json"], payload)
    _write_csv(paths["csv"], header, rows)
    paths["txt"].write_text(_text_summary(kind, payload))
    return paths
