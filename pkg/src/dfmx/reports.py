"""CSV reports, the summary table, SVG line plots and image previews.

Every CSV starts with a schema row ``schema,<name>,<version>`` followed by
the column header. Floats are written with ``repr`` so that a file read back
and rewritten is byte-identical.

Schemas (version 1):

``history``     epoch, train_loss, val_loss, val_accuracy, learning_rate
``dfm_stats``   class, frequency_count, standard_accuracy, retained_accuracy, budget
                (plus rows ``mean``, ``union`` and ``intersection``)
``corruption``  model_id, baseline_id, metric, kind, severity, value
                metric is ``ce`` per (kind, severity), ``group_ce`` per group and
                ``sa``, ``ra``, ``mce``, ``rce`` once each
``attack``      model_id, attack, eps_255, epsilon, step_size, steps, init, accuracy
``summary``     label, model_id, baseline_id, sa, ra, mce, rce
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .attacks import AttackReport
from .corruptions import GROUP_ORDER, CorruptionReport
from .dfm import DominantFrequencyMap, dfm_stats
from .model import TrainHistory

SCHEMA_VERSION = 1

HISTORY_COLUMNS = ("epoch", "train_loss", "val_loss", "val_accuracy", "learning_rate")
DFM_COLUMNS = ("class", "frequency_count", "standard_accuracy", "retained_accuracy", "budget")
CORRUPTION_COLUMNS = ("model_id", "baseline_id", "metric", "kind", "severity", "value")
ATTACK_COLUMNS = ("model_id", "attack", "eps_255", "epsilon", "step_size", "steps", "init",
                  "accuracy")
SUMMARY_COLUMNS = ("label", "model_id", "baseline_id", "sa", "ra", "mce", "rce")


class ReportFormatError(ValueError):
    pass


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: str | Path, schema: str, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["schema", schema, SCHEMA_VERSION])
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    Path(path).write_text(buf.getvalue())


def read_csv(path: str | Path, schema: str) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        head = next(r, None)
        if head != ["schema", schema, str(SCHEMA_VERSION)]:
            raise ReportFormatError(f"{path}: expected schema row 'schema,{schema},{SCHEMA_VERSION}'")
        columns = next(r, None)
        if not columns:
            raise ReportFormatError(f"{path}: missing column header")
        return [dict(zip(columns, row)) for row in r]


# --- per-stage CSVs ---------------------------------------------------------------


def write_history(history: TrainHistory, path: str | Path) -> None:
    write_csv(path, "history", HISTORY_COLUMNS, history.rows())


def write_dfm_stats(dfms: Sequence[DominantFrequencyMap], path: str | Path) -> None:
    rows = [(d.class_id, d.frequency_count, d.standard_accuracy, d.retained_accuracy, d.budget)
            for d in sorted(dfms, key=lambda d: d.class_id)]
    stats = dfm_stats(dfms)
    rows.append(("mean", stats["mean_count"], "", "", ""))
    rows.append(("union", stats["union_count"], "", "", ""))
    rows.append(("intersection", stats["intersection_count"], "", "", ""))
    write_csv(path, "dfm_stats", DFM_COLUMNS, rows)


def corruption_rows(report: CorruptionReport) -> list[tuple]:
    mid, bid = report.model_id, report.baseline_id
    rows: list[tuple] = []
    for kind, errs in zip(report.ce.kinds, report.ce.errors):
        for s, e in zip(report.ce.severities, errs):
            rows.append((mid, bid, "ce", kind.value, s, float(e)))
    for g in GROUP_ORDER:
        if g in report.groups:
            rows.append((mid, bid, "group_ce", g, "", report.groups[g]))
    for name in ("sa", "ra", "mce", "rce"):
        rows.append((mid, bid, name, "", "", getattr(report, name)))
    return rows


def write_corruption(report: CorruptionReport, path: str | Path) -> None:
    write_csv(path, "corruption", CORRUPTION_COLUMNS, corruption_rows(report))


def attack_rows(report: AttackReport) -> list[tuple]:
    rows = []
    for name, accs in report.accuracy.items():
        for eps, acc in zip(report.epsilons, accs):
            if name == "pgd":
                step, steps = (report.step_size(eps) if eps > 0 else 0.0), report.steps
            else:
                step, steps = eps, 1
            rows.append((report.model_id, name, _eps_255(eps), eps, step, steps,
                         report.init if name == "pgd" else "none", acc))
    return rows


def _eps_255(eps: float) -> str:
    k = eps * 255
    return str(int(round(k))) if abs(k - round(k)) < 1e-9 else repr(k)


def write_attack(report: AttackReport, path: str | Path) -> None:
    write_csv(path, "attack", ATTACK_COLUMNS, attack_rows(report))


# --- summary table ------------------------------------------------------------------


@dataclass(frozen=True)
class SummaryRow:
    label: str
    model_id: str
    baseline_id: str
    sa: float
    ra: float
    mce: float
    rce: float


def summary_from_corruption_csv(path: str | Path) -> SummaryRow:
    rows = read_csv(path, "corruption")
    if not rows:
        raise ReportFormatError(f"{path}: no rows")
    metrics = {r["metric"]: float(r["value"]) for r in rows if r["metric"] in ("sa", "ra", "mce", "rce")}
    missing = {"sa", "ra", "mce", "rce"} - metrics.keys()
    if missing:
        raise ReportFormatError(f"{path}: missing metric rows {sorted(missing)}")
    mid, bid = rows[0]["model_id"], rows[0]["baseline_id"]
    label = "baseline" if mid == bid else mid
    return SummaryRow(label, mid, bid, metrics["sa"], metrics["ra"], metrics["mce"], metrics["rce"])


def sort_summary(rows: Sequence[SummaryRow]) -> list[SummaryRow]:
    return sorted(rows, key=lambda r: (r.label != "baseline", r.model_id))


def write_summary(rows: Sequence[SummaryRow], path: str | Path) -> None:
    write_csv(path, "summary", SUMMARY_COLUMNS,
              [(r.label, r.model_id, r.baseline_id, r.sa, r.ra, r.mce, r.rce)
               for r in sort_summary(rows)])


def format_summary(rows: Sequence[SummaryRow]) -> str:
    """Plain-text table with accuracies and corruption errors in percent."""
    lines = [f"{'model':<24} {'SA':>7} {'RA':>7} {'mCE':>7} {'rCE':>7}"]
    for r in sort_summary(rows):
        lines.append(f"{r.label:<24} {100 * r.sa:7.2f} {100 * r.ra:7.2f} {r.mce:7.2f} {r.rce:7.2f}")
    return "\n".join(lines)


# --- SVG ---------------------------------------------------------------------------------

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def line_plot_svg(series: dict[str, tuple[Sequence[float], Sequence[float]]], title: str = "",
                  xlabel: str = "", ylabel: str = "", width: int = 480, height: int = 320,
                  ylim: tuple[float, float] | None = None) -> str:
    """Axes, one polyline per series and a legend, as an SVG document."""
    left, right, top, bottom = 60, 20, 30, 45
    pw, ph = width - left - right, height - top - bottom
    xs_all = [float(x) for xs, _ in series.values() for x in xs]
    ys_all = [float(y) for _, ys in series.values() for y in ys]
    x0, x1 = (min(xs_all), max(xs_all)) if xs_all else (0.0, 1.0)
    y0, y1 = ylim if ylim else ((min(ys_all), max(ys_all)) if ys_all else (0.0, 1.0))
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(x: float) -> float:
        return left + (x - x0) / (x1 - x0) * pw

    def py(y: float) -> float:
        return top + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{_esc(title)}</text>')
    out.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>')
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{px(t):.1f}" y1="{top + ph}" x2="{px(t):.1f}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{px(t):.1f}" y="{top + ph + 16}" text-anchor="middle">{t:.3g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{left - 4}" y1="{py(t):.1f}" x2="{left}" y2="{py(t):.1f}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{py(t) + 4:.1f}" text-anchor="end">{t:.3g}</text>')
    if xlabel:
        out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">{_esc(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 14 {top + ph / 2:.1f})">{_esc(ylabel)}</text>')
    for i, (name, (xs, ys)) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{px(float(x)):.1f},{py(float(y)):.1f}" for x, y in zip(xs, ys))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = top + 12 + 14 * i
        out.append(f'<line x1="{left + pw - 110}" y1="{ly}" x2="{left + pw - 90}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 85}" y="{ly + 4}">{_esc(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def attack_curve_svg(report: AttackReport) -> str:
    series = {name: ([e * 255 for e in report.epsilons], accs) for name, accs in report.accuracy.items()}
    return line_plot_svg(series, title=f"{report.model_id}: accuracy under attack",
                         xlabel="epsilon (/255)", ylabel="accuracy", ylim=(0.0, 1.0))


# --- image previews ----------------------------------------------------------------


def image_grid(rows: Sequence[np.ndarray], gap: int = 2) -> np.ndarray:
    """Tile ``rows`` (each an ``(N, C, H, W)`` batch) into one ``(C, H', W')`` image."""
    n = max(len(r) for r in rows)
    c, h, w = rows[0].shape[1:]
    grid = np.ones((c, len(rows) * (h + gap) - gap, n * (w + gap) - gap))
    for i, r in enumerate(rows):
        for j, img in enumerate(r):
            grid[:, i * (h + gap):i * (h + gap) + h, j * (w + gap):j * (w + gap) + w] = img
    return grid


def write_pnm(image: np.ndarray, path: str | Path) -> None:
    """Binary PGM (one channel) or PPM (three channels) of a ``(C, H, W)`` image in [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    c, h, w = img.shape
    if c not in (1, 3):
        raise ValueError("PNM output needs one or three channels")
    data = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    magic = b"P5" if c == 1 else b"P6"
    body = data[0].tobytes() if c == 1 else np.transpose(data, (1, 2, 0)).tobytes()
    Path(path).write_bytes(magic + f"\n{w} {h}\n255\n".encode() + body)


def read_pnm(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    m = re.match(rb"(P[56])\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if m is None:
        raise ValueError(f"{path}: not a binary PGM/PPM file")
    w, h, maxval = int(m[2]), int(m[3]), int(m[4])
    c = 1 if m[1] == b"P5" else 3
    arr = np.frombuffer(raw, dtype=np.uint8, count=h * w * c, offset=m.end())
    if c == 1:
        return arr.reshape(1, h, w) / maxval
    return np.transpose(arr.reshape(h, w, 3), (2, 0, 1)) / maxval
