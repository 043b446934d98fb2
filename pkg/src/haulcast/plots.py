"""PNG figures rendered from the analysis CSVs.

Kept apart from :mod:`haulcast.evaluation` so the metric code never imports
matplotlib. Each function reads one table and writes one figure next to it.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import DataError  # noqa: E402

DPI = 110
# fixed metadata keeps repeated renders byte-identical
_PNG_META = {"Software": "haulcast"}

_STYLE = {
    "figure.figsize": (7.0, 4.2),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def _read(path: Path) -> tuple[list[str], list[list[str]]]:
    if not path.is_file():
        raise DataError(f"analysis table not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"empty analysis table: {path}")
    return rows[0], rows[1:]


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=DPI, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_forecast_vs_actual(table: Path, out: Path) -> Path:
    header, rows = _read(table)
    data = np.array(rows, dtype=float)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.plot(data[:, 0], data[:, 1], color="black", lw=1.2, label="actual")
        for j, name in enumerate(header[2:], start=2):
            ax.plot(data[:, 0], data[:, j], lw=0.9, alpha=0.85, label=name.removeprefix("pred_"))
        ax.set_xlabel("shift index")
        ax.set_ylabel("next-shift payload (t)")
        ax.legend(ncol=len(header) - 1)
        return _save(fig, out)


def plot_error_timeline(table: Path, out: Path) -> Path:
    header, rows = _read(table)
    data = np.array(rows, dtype=float)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for j, name in enumerate(header[1:], start=1):
            ax.plot(data[:, 0], data[:, j], lw=0.8, label=name.removeprefix("error_pct_"))
        ax.axhline(50.0, color="grey", ls="--", lw=0.8)
        ax.set_xlabel("shift index")
        ax.set_ylabel("absolute error (%)")
        ax.legend()
        return _save(fig, out)


def plot_calibration(table: Path, out: Path) -> Path:
    _, rows = _read(table)
    series = defaultdict(list)
    for model, actual, predicted in rows:
        series[model].append((float(actual), float(predicted)))
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 5.0))
        lo, hi = np.inf, -np.inf
        for model, pairs in series.items():
            xy = np.array(pairs)
            ax.scatter(xy[:, 0], xy[:, 1], s=8, alpha=0.5, label=model)
            lo, hi = min(lo, xy.min()), max(hi, xy.max())
        ax.plot([lo, hi], [lo, hi], color="black", lw=0.8)
        ax.set_xlabel("actual payload (t)")
        ax.set_ylabel("predicted payload (t)")
        ax.legend()
        return _save(fig, out)


def plot_error_density(table: Path, out: Path) -> Path:
    _, rows = _read(table)
    series = defaultdict(list)
    for model, x, d, _bw in rows:
        series[model].append((float(x), float(d)))
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for model, pairs in series.items():
            xy = np.array(pairs)
            (line,) = ax.plot(xy[:, 0], xy[:, 1], label=model)
            ax.fill_between(xy[:, 0], xy[:, 1], color=line.get_color(), alpha=0.15)
        ax.set_xlabel("absolute error (%)")
        ax.set_ylabel("density")
        ax.legend()
        return _save(fig, out)


def plot_shap_summary(table: Path, out: Path) -> Path:
    _, rows = _read(table)
    names = [r[1] for r in rows][::-1]
    values = [float(r[2]) for r in rows][::-1]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 0.28 * len(names) + 1.0))
        ax.barh(names, values, color="tab:blue")
        ax.set_xlabel("mean |SHAP value| (t)")
        ax.grid(axis="y", visible=False)
        return _save(fig, out)


_FIGURES = (
    ("forecast_vs_actual.csv", "forecast_vs_actual.png", plot_forecast_vs_actual),
    ("error_timeline.csv", "error_timeline.png", plot_error_timeline),
    ("calibration.csv", "calibration.png", plot_calibration),
    ("error_density.csv", "error_density.png", plot_error_density),
    ("shap_summary.csv", "shap_summary.png", plot_shap_summary),
)


def render_report(directory: str | Path) -> list[Path]:
    """Render a PNG for every analysis table present in ``directory``."""
    directory = Path(directory)
    written = []
    for table, image, draw in _FIGURES:
        if (directory / table).is_file():
            written.append(draw(directory / table, directory / image))
    return written
