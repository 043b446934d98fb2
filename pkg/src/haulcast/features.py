"""Next-shift feature rows, min-max scaling, chronological split and look-back windows."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AlignmentError, DataError, ValidationError
from .ingest import ShiftRecord

# model predictors in their canonical order; crew_next is categorical
FEATURE_NAMES = (
    "crew_next",
    "working_trucks",
    "predicted_working_trucks_next",
    "predicted_working_shovels_next",
    "working_shovels",
    "cycle_count",
    "payload",
    "cycle_time",
    "payload_lag1",
    "payload_rolling_sum_4",
    "shift_next",
    "working_trucks_lag1",
    "working_trucks_mean4",
    "precipitation",
    "precipitation_next",
    "precipitation_sum6",
)
ABLATION_FEATURE = "working_trucks_next"
TARGET = "target_next_payload"
ORIGIN = "origin_shift_index"
CATEGORICAL = "crew_next"

HEAD_DROP = 5  # rows t < 5 lack a complete six-shift rain window
MIN_RECORDS = 8


@dataclass
class Dataset:
    """Chronological feature rows.

    ``columns`` holds raw values: crew labels for ``crew_next``, floats for
    everything else. ``crews`` is the one-hot vocabulary used by
    :meth:`matrix`.
    """

    columns: dict[str, np.ndarray]
    target: np.ndarray
    origin: np.ndarray
    crews: tuple[str, ...]
    raw_names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        if len(self.origin) > 1 and np.any(np.diff(self.origin) <= 0):
            raise DataError("dataset rows must be strictly increasing in origin_shift_index")

    def __len__(self):
        return len(self.target)

    @property
    def feature_names(self) -> list[str]:
        """Model-facing column names with crew_next expanded to one indicator per crew."""
        names = []
        for name in self.raw_names:
            if name == CATEGORICAL:
                names.extend(f"{CATEGORICAL}_{c}" for c in self.crews)
            else:
                names.append(name)
        return names

    def matrix(self, crews: Sequence[str] | None = None) -> np.ndarray:
        crews = tuple(self.crews if crews is None else crews)
        labels = self.columns[CATEGORICAL]
        unseen = sorted(set(labels.tolist()) - set(crews))
        if unseen:
            raise DataError(f"crew labels {unseen} not in the encoding vocabulary {list(crews)}")
        blocks = []
        for name in self.raw_names:
            if name == CATEGORICAL:
                blocks.append((labels[:, None] == np.array(crews)[None, :]).astype(float))
            else:
                blocks.append(np.asarray(self.columns[name], dtype=float)[:, None])
        return np.hstack(blocks) if blocks else np.empty((len(self), 0))

    def take(self, rows) -> "Dataset":
        return replace(
            self,
            columns={k: v[rows] for k, v in self.columns.items()},
            target=self.target[rows],
            origin=self.origin[rows],
        )

    def with_crews(self, crews: Sequence[str]) -> "Dataset":
        return replace(self, crews=tuple(crews))


def _record_columns(records: Sequence[ShiftRecord]) -> dict[str, np.ndarray]:
    return {
        "working_trucks": np.array([r.working_trucks for r in records], dtype=float),
        "working_shovels": np.array([r.working_shovels for r in records], dtype=float),
        "cycle_count": np.array([r.cycle_count for r in records], dtype=float),
        "payload": np.array([r.payload for r in records], dtype=float),
        "cycle_time": np.array([r.cycle_time for r in records], dtype=float),
        "precipitation": np.array([r.precipitation for r in records], dtype=float),
    }


def _trailing(values: np.ndarray, width: int, how: str) -> np.ndarray:
    """Trailing window statistic over t-width+1..t inclusive; NaN where incomplete."""
    n = len(values)
    out = np.full(n, np.nan)
    if n >= width:
        # accumulate oldest to newest so sums match a plain loop bit for bit
        total = values[: n - width + 1].astype(float)
        for k in range(1, width):
            total = total + values[k : n - width + 1 + k]
        out[width - 1:] = total if how == "sum" else total / width
    return out


def build_features(
    records: Sequence[ShiftRecord],
    fleet_forecasts,
    include_true_next_trucks: bool = False,
) -> Dataset:
    """Build one feature row per shift t, predicting the payload of shift t+1.

    Args:
        records: consecutive shift records in chronological order.
        fleet_forecasts: array of shape (n, 2); row t holds the predicted
            (trucks, shovels) for shift t+1.
        include_true_next_trucks: append the actual next-shift truck count
            as an extra feature (planning ablation).
    """
    n = len(records)
    if n < MIN_RECORDS:
        raise DataError(f"need at least {MIN_RECORDS} shift records, got {n}")
    forecasts = np.asarray(fleet_forecasts, dtype=float)
    if forecasts.shape != (n, 2):
        raise AlignmentError(f"fleet_forecasts must have shape ({n}, 2), got {forecasts.shape}")
    index = np.array([r.shift_index for r in records])
    if np.any(np.diff(index) != 1):
        raise DataError("shift records must be consecutive in shift_index")

    cols = _record_columns(records)
    trucks, payload, rain = cols["working_trucks"], cols["payload"], cols["precipitation"]
    rows = np.arange(HEAD_DROP, n - 1)
    nxt = rows + 1

    out = {
        "crew_next": np.array([records[i].crew for i in nxt], dtype=object),
        "working_trucks": trucks[rows],
        "predicted_working_trucks_next": forecasts[rows, 0],
        "predicted_working_shovels_next": forecasts[rows, 1],
        "working_shovels": cols["working_shovels"][rows],
        "cycle_count": cols["cycle_count"][rows],
        "payload": payload[rows],
        "cycle_time": cols["cycle_time"][rows],
        "payload_lag1": payload[rows - 1],
        "payload_rolling_sum_4": _trailing(payload, 4, "sum")[rows],
        "shift_next": np.array([records[i].shift_kind == "night" for i in nxt], dtype=float),
        "working_trucks_lag1": trucks[rows - 1],
        "working_trucks_mean4": _trailing(trucks, 4, "mean")[rows],
        "precipitation": rain[rows],
        "precipitation_next": rain[nxt],
        "precipitation_sum6": _trailing(rain, 6, "sum")[rows],
    }
    names = FEATURE_NAMES
    if include_true_next_trucks:
        out[ABLATION_FEATURE] = trucks[nxt]
        names = FEATURE_NAMES + (ABLATION_FEATURE,)
    for name, values in out.items():
        if name != CATEGORICAL and not np.all(np.isfinite(values)):
            raise DataError(f"feature {name} has missing or non-finite values")
    crews = tuple(sorted({r.crew for r in records}))
    return Dataset(out, payload[nxt], index[rows], crews, names)


# ---------------------------------------------------------------------------
# scaling


@dataclass(frozen=True)
class ScalerParams:
    feature_names: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray
    target_min: float
    target_max: float

    def __post_init__(self):
        if np.any(self.mins > self.maxs) or self.target_min > self.target_max:
            raise ValidationError("scaler min exceeds max")

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "mins": [float(v) for v in self.mins],
            "maxs": [float(v) for v in self.maxs],
            "target_min": float(self.target_min),
            "target_max": float(self.target_max),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScalerParams":
        return cls(
            tuple(data["feature_names"]),
            np.array(data["mins"], dtype=float),
            np.array(data["maxs"], dtype=float),
            float(data["target_min"]),
            float(data["target_max"]),
        )


def _scale(x, lo, hi):
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (x - lo) / safe, 0.0)


def fit_feature_scaler(train: Dataset) -> ScalerParams:
    """Per-feature and target (min, max) from the training rows only."""
    if len(train) == 0:
        raise DataError("cannot fit a scaler on an empty training set")
    X = train.matrix()
    return ScalerParams(
        tuple(train.feature_names), X.min(axis=0), X.max(axis=0),
        float(train.target.min()), float(train.target.max()),
    )


def apply_feature_scaler(params: ScalerParams, rows) -> np.ndarray:
    """(x - min) / (max - min); constant features map to 0 and nothing is clipped."""
    X = np.asarray(rows, dtype=float)
    if X.shape[-1] != len(params.mins):
        raise AlignmentError(f"scaler expects {len(params.mins)} features, got {X.shape[-1]}")
    return _scale(X, params.mins, params.maxs)


def scale_target(params: ScalerParams, y) -> np.ndarray:
    return _scale(np.asarray(y, dtype=float), params.target_min, params.target_max)


def inverse_target(params: ScalerParams, y_scaled) -> np.ndarray:
    return params.target_min + np.asarray(y_scaled, dtype=float) * (params.target_max - params.target_min)


# ---------------------------------------------------------------------------
# split and windows


def split_point(n: int, train_fraction: float = 0.8) -> int:
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    return math.floor(n * train_fraction)


def chronological_split(dataset: Dataset, train_fraction: float = 0.8) -> tuple[Dataset, Dataset]:
    """First floor(n * train_fraction) rows train, the rest test; no shuffling."""
    n = len(dataset)
    if n < 2:
        raise DataError(f"need at least 2 rows to split, got {n}")
    cut = split_point(n, train_fraction)
    return dataset.take(slice(0, cut)), dataset.take(slice(cut, n))


def make_sequences(features, targets, lookback: int = 10, origin=None):
    """Sliding windows of ``lookback`` consecutive rows.

    The window ending at row t is paired with row t's target, so there are
    max(0, n - lookback + 1) windows.

    Returns:
        (windows of shape (m, lookback, p), targets of shape (m,), end row positions)
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if lookback < 1:
        raise DataError(f"lookback must be >= 1, got {lookback}")
    if len(X) != len(y):
        raise AlignmentError("features and targets differ in length")
    if origin is not None and len(origin) > 1 and np.any(np.diff(origin) != 1):
        raise DataError("windowed rows must be consecutive in shift index")
    m = max(0, len(X) - lookback + 1)
    if m == 0:
        return np.empty((0, lookback, X.shape[1] if X.ndim == 2 else 0)), np.empty(0), np.empty(0, dtype=int)
    ends = np.arange(lookback - 1, len(X))
    idx = ends[:, None] - np.arange(lookback - 1, -1, -1)[None, :]
    return X[idx], y[ends], ends


# ---------------------------------------------------------------------------
# feature CSV


def save_feature_csv(dataset: Dataset, path: str | Path) -> Path:
    path = Path(path)
    header = [ORIGIN, *dataset.raw_names, TARGET]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(dataset)):
            row = [str(int(dataset.origin[i]))]
            for name in dataset.raw_names:
                value = dataset.columns[name][i]
                row.append(str(value) if name == CATEGORICAL else repr(float(value)))
            row.append(repr(float(dataset.target[i])))
            writer.writerow(row)
    return path


def load_feature_csv(path: str | Path) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"feature file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        rows = [r for r in reader if r]
    if header is None:
        raise ValidationError(f"{path}: empty feature file")
    expected = [ORIGIN, *FEATURE_NAMES]
    if header[: len(expected)] != expected or header[-1] != TARGET:
        raise ValidationError(f"{path}: unexpected feature header {header}")
    extras = header[len(expected):-1]
    if extras not in ([], [ABLATION_FEATURE]):
        raise ValidationError(f"{path}: unknown extra columns {extras}")
    raw_names = tuple(FEATURE_NAMES) + tuple(extras)
    columns = {}
    try:
        origin = np.array([int(r[0]) for r in rows], dtype=np.int64)
        for j, name in enumerate(raw_names, start=1):
            if name == CATEGORICAL:
                columns[name] = np.array([r[j] for r in rows], dtype=object)
            else:
                columns[name] = np.array([float(r[j]) for r in rows], dtype=float)
        target = np.array([float(r[-1]) for r in rows], dtype=float)
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"{path}: unparsable feature cell ({exc})") from None
    if columns and not all(np.all(np.isfinite(v)) for k, v in columns.items() if k != CATEGORICAL):
        raise ValidationError(f"{path}: non-finite feature values")
    crews = tuple(sorted(set(columns[CATEGORICAL].tolist())))
    return Dataset(columns, target, origin, crews, raw_names)
