"""Forecast metrics and plot-ready analysis tables."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import AlignmentError, DataError, NumericError

KDE_POINTS = 256


def _pair(predictions, actuals, min_len: int = 1):
    p = np.asarray(predictions, dtype=float).ravel()
    a = np.asarray(actuals, dtype=float).ravel()
    if len(p) != len(a):
        raise AlignmentError(f"{len(p)} predictions vs {len(a)} actuals")
    if len(a) < min_len:
        raise DataError(f"need at least {min_len} observations, got {len(a)}")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(a))):
        raise NumericError("non-finite predictions or actuals")
    return p, a


def percentage_errors(predictions, actuals) -> np.ndarray:
    """|p - a| / |a| * 100 per observation; a zero actual is an error."""
    p, a = _pair(predictions, actuals)
    if np.any(a == 0):
        raise DataError("relative error undefined: an actual value is zero")
    return np.abs(p - a) / np.abs(a) * 100.0


def medae_pct(predictions, actuals) -> float:
    """Median absolute percentage error (the midpoint for an even count)."""
    return float(np.median(percentage_errors(predictions, actuals)))


def r2(predictions, actuals) -> float:
    p, a = _pair(predictions, actuals, min_len=2)
    total = np.sum((a - a.mean()) ** 2)
    if total == 0:
        raise DataError("R^2 undefined: actuals have zero variance")
    return float(1.0 - np.sum((a - p) ** 2) / total)


def count_errors_over(predictions, actuals, threshold_pct: float = 50.0) -> int:
    """Observations whose percentage error strictly exceeds ``threshold_pct``."""
    return int(np.sum(percentage_errors(predictions, actuals) > threshold_pct))


@dataclass(frozen=True)
class MetricsReport:
    model_label: str
    n_observations: int
    medae_pct: float
    r2: float
    count_over_50pct: int
    mean_abs_error: float


def metrics_report(label: str, predictions, actuals, threshold_pct: float = 50.0) -> MetricsReport:
    p, a = _pair(predictions, actuals, min_len=2)
    return MetricsReport(
        model_label=label,
        n_observations=len(a),
        medae_pct=medae_pct(p, a),
        r2=r2(p, a),
        count_over_50pct=count_errors_over(p, a, threshold_pct),
        mean_abs_error=float(np.mean(np.abs(p - a))),
    )


@dataclass(frozen=True)
class DensityCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self) -> float:
        trapezoid = getattr(np, "trapezoid", None) or np.trapz
        return float(trapezoid(self.density, self.grid))


def silverman_bandwidth(values) -> float:
    """1.06 * min(std, IQR / 1.34) * n^(-1/5); falls back to std when the IQR is zero."""
    x = np.asarray(values, dtype=float)
    std = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25)
    spread = min(std, iqr / 1.34) if iqr > 0 else std
    return 1.06 * spread * len(x) ** (-0.2)


def kde_density(abs_errors, n_points: int = KDE_POINTS) -> DensityCurve:
    """Gaussian KDE on an even grid spanning [min - 3h, max + 3h]."""
    x = np.asarray(abs_errors, dtype=float).ravel()
    if len(x) < 2:
        raise DataError("KDE needs at least 2 values")
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise DataError("KDE input must be finite and non-negative")
    h = silverman_bandwidth(x)
    if not h > 0:
        raise NumericError("zero KDE bandwidth: all values identical")
    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, n_points)
    z = (grid[:, None] - x[None, :]) / h
    with np.errstate(over="ignore", divide="ignore"):
        density = np.exp(-0.5 * z * z).sum(axis=1) / (len(x) * h * np.sqrt(2 * np.pi))
    if not np.all(np.isfinite(density)):
        raise NumericError(f"KDE bandwidth {h!r} too small to evaluate")
    return DensityCurve(grid, density, h)


# ---------------------------------------------------------------------------
# analysis files


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write(path: Path, header: Sequence[str], rows) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def write_metrics_csv(reports: Sequence[MetricsReport], path: str | Path) -> Path:
    fields = list(asdict(reports[0]).keys()) if reports else list(MetricsReport.__dataclass_fields__)
    return _write(Path(path), fields, [list(asdict(r).values()) for r in reports])


def emit_analysis(
    predictions: Mapping[str, Sequence[float]],
    actuals,
    shift_indices,
    out_dir: str | Path,
    threshold_pct: float = 50.0,
) -> dict[str, Path]:
    """Write the five analysis tables for one or more aligned models.

    Files: forecast_vs_actual.csv, error_timeline.csv, calibration.csv,
    error_density.csv and metrics.csv.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out_dir}: {exc}") from None
    a = np.asarray(actuals, dtype=float)
    idx = np.asarray(shift_indices)
    if len(idx) != len(a):
        raise AlignmentError("shift_indices and actuals differ in length")
    if not predictions:
        raise DataError("no model predictions to analyse")
    labels = list(predictions)
    preds = {}
    for label in labels:
        p, _ = _pair(predictions[label], a, min_len=2)
        preds[label] = p
    pct = {label: percentage_errors(preds[label], a) for label in labels}

    files = {}
    files["forecast_vs_actual"] = _write(
        out_dir / "forecast_vs_actual.csv",
        ["shift_index", "actual", *[f"pred_{m}" for m in labels]],
        ([int(idx[i]), a[i], *[preds[m][i] for m in labels]] for i in range(len(a))),
    )
    files["error_timeline"] = _write(
        out_dir / "error_timeline.csv",
        ["shift_index", *[f"error_pct_{m}" for m in labels]],
        ([int(idx[i]), *[pct[m][i] for m in labels]] for i in range(len(a))),
    )
    files["calibration"] = _write(
        out_dir / "calibration.csv",
        ["model", "actual", "predicted"],
        ([m, a[i], preds[m][i]] for m in labels for i in range(len(a))),
    )
    density_rows = []
    for m in labels:
        curve = kde_density(pct[m])
        density_rows.extend([m, g, d, curve.bandwidth] for g, d in zip(curve.grid, curve.density))
    files["error_density"] = _write(
        out_dir / "error_density.csv", ["model", "abs_error_pct", "density", "bandwidth"], density_rows
    )
    reports = [metrics_report(m, preds[m], a, threshold_pct) for m in labels]
    files["metrics"] = write_metrics_csv(reports, out_dir / "metrics.csv")
    return files


def read_metrics_csv(path: str | Path) -> list[MetricsReport]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [
        MetricsReport(
            r["model_label"], int(r["n_observations"]), float(r["medae_pct"]),
            float(r["r2"]), int(r["count_over_50pct"]), float(r["mean_abs_error"]),
        )
        for r in rows
    ]
