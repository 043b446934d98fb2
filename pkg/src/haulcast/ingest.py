"""Shift-record data model, CSV loading, rainfall gap repair and shift aggregation."""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CoverageError, DataError, ValidationError

SHIFT_COLUMNS = (
    "shift_index",
    "date",
    "shift_kind",
    "crew",
    "working_trucks",
    "working_shovels",
    "cycle_count",
    "payload",
    "cycle_time",
    "precipitation",
)
RAIN_COLUMNS = ("timestamp", "precip_mm")
SHIFT_KINDS = ("day", "night")
SHIFT_MINUTES = 630

_HOUR = np.timedelta64(60, "m")


@dataclass(frozen=True)
class ShiftRecord:
    """One 10.5 hour operating shift as reported by the fleet management system."""

    shift_index: int
    date: dt.date
    shift_kind: str
    crew: str
    working_trucks: int
    working_shovels: int
    cycle_count: int
    payload: float
    cycle_time: float
    precipitation: float

    def validate(self) -> None:
        if self.shift_index < 0:
            raise ValidationError(f"shift_index must be non-negative, got {self.shift_index}")
        if self.shift_kind not in SHIFT_KINDS:
            raise ValidationError(f"shift_kind must be one of {SHIFT_KINDS}, got {self.shift_kind!r}")
        if not self.crew:
            raise ValidationError("crew label is empty")
        for name in ("working_trucks", "working_shovels", "cycle_count", "payload", "precipitation"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"{name} must be finite and >= 0, got {value}")
        if not math.isfinite(self.cycle_time) or self.cycle_time <= 0:
            raise ValidationError(f"cycle_time must be finite and > 0, got {self.cycle_time}")


@dataclass(frozen=True)
class ShiftCalendar:
    day_shift_start: dt.time = dt.time(5, 30)
    night_shift_start: dt.time = dt.time(17, 30)
    shift_length: int = SHIFT_MINUTES

    def __post_init__(self):
        if self.shift_length != SHIFT_MINUTES:
            raise ValidationError(f"shift_length is fixed at {SHIFT_MINUTES} minutes")
        day = _minutes(self.day_shift_start)
        night = _minutes(self.night_shift_start)
        if not (day + self.shift_length <= night and night + self.shift_length <= day + 24 * 60):
            raise ValidationError("day and night shift windows overlap")

    def window(self, date: dt.date, kind: str) -> tuple[dt.datetime, dt.datetime]:
        """Return the [start, end) operating window of one shift."""
        start_time = self.day_shift_start if kind == "day" else self.night_shift_start
        start = dt.datetime.combine(date, start_time)
        return start, start + dt.timedelta(minutes=self.shift_length)

    def catchment(self, date: dt.date, kind: str) -> tuple[dt.datetime, dt.datetime]:
        """Window plus the changeover gap that precedes it.

        Catchments of consecutive shifts tile the time axis, so rain that
        falls between shifts is credited to the following one.
        """
        if kind == "day":
            _, previous_end = self.window(date - dt.timedelta(days=1), "night")
        else:
            _, previous_end = self.window(date, "day")
        return previous_end, self.window(date, kind)[1]


@dataclass
class HourlyRain:
    """Hourly precipitation series; ``amounts`` holds NaN where a value is missing."""

    timestamps: np.ndarray  # datetime64[m]
    amounts: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[m]")
        self.amounts = np.asarray(self.amounts, dtype=float)
        if self.timestamps.shape != self.amounts.shape:
            raise DataError("timestamps and amounts differ in length")
        if len(self.timestamps) > 1 and np.any(np.diff(self.timestamps) <= np.timedelta64(0, "m")):
            raise DataError("rain timestamps must be strictly increasing")
        present = ~np.isnan(self.amounts)
        if np.any(self.amounts[present] < 0) or np.any(np.isinf(self.amounts)):
            raise DataError("rain amounts must be finite and >= 0")

    def __len__(self):
        return len(self.amounts)


@dataclass(frozen=True)
class GapFlag:
    """A run of missing hours left unrepaired for manual review."""

    start: dt.datetime
    end: dt.datetime  # last missing hour, inclusive
    n_hours: int
    reason: str


def _minutes(t: dt.time) -> int:
    return t.hour * 60 + t.minute


# ---------------------------------------------------------------------------
# shift CSV


def _parse_count(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"expected an integer count, got {text!r}")
    return int(value)


_PARSERS = {
    "shift_index": int,
    "date": dt.date.fromisoformat,
    "shift_kind": str.strip,
    "crew": str.strip,
    "working_trucks": _parse_count,
    "working_shovels": _parse_count,
    "cycle_count": _parse_count,
    "payload": float,
    "cycle_time": float,
    "precipitation": float,
}


def validate_records(records: Sequence[ShiftRecord]) -> None:
    """Check per-record bounds and the ordering invariants of a shift sequence."""
    seen_slots = {}
    for row, rec in enumerate(records, start=1):
        try:
            rec.validate()
        except ValidationError as exc:
            raise ValidationError(f"row {row}: {exc}") from None
        if row > 1 and rec.shift_index <= records[row - 2].shift_index:
            raise ValidationError(
                f"row {row}: shift_index {rec.shift_index} is duplicated or out of order"
            )
        slot = (rec.date, rec.shift_kind)
        if slot in seen_slots:
            raise ValidationError(f"row {row}: duplicate shift {rec.date} {rec.shift_kind}")
        seen_slots[slot] = rec.shift_index
        if rec.shift_kind == "night" and seen_slots.get((rec.date, "day"), -1) > rec.shift_index:
            raise ValidationError(f"row {row}: night shift precedes day shift on {rec.date}")
        if rec.shift_kind == "day" and (rec.date, "night") in seen_slots:
            raise ValidationError(f"row {row}: night shift precedes day shift on {rec.date}")


def load_shift_csv(path: str | Path) -> list[ShiftRecord]:
    """Parse and validate a shift CSV, returning records sorted by shift_index."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"shift file not found: {path}")
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{path}: empty file")
        header = [h.strip() for h in header]
        missing = [c for c in SHIFT_COLUMNS if c not in header]
        unknown = [c for c in header if c not in SHIFT_COLUMNS]
        if missing or unknown:
            raise ValidationError(f"{path}: missing columns {missing}, unknown columns {unknown}")
        position = {name: header.index(name) for name in SHIFT_COLUMNS}
        for line_no, cells in enumerate(reader, start=2):
            if not cells:
                continue
            if len(cells) != len(header):
                raise ValidationError(f"{path}: row {line_no}: expected {len(header)} cells, got {len(cells)}")
            values = {}
            for name in SHIFT_COLUMNS:
                text = cells[position[name]]
                try:
                    values[name] = _PARSERS[name](text)
                except ValueError:
                    raise ValidationError(
                        f"{path}: row {line_no}: cannot parse {name}={text!r}"
                    ) from None
            rec = ShiftRecord(**values)
            try:
                rec.validate()
            except ValidationError as exc:
                raise ValidationError(f"{path}: row {line_no}: {exc}") from None
            records.append(rec)
    indices = [r.shift_index for r in records]
    if len(set(indices)) != len(indices):
        dup = next(i for i in indices if indices.count(i) > 1)
        raise ValidationError(f"{path}: duplicate shift_index {dup}")
    records.sort(key=lambda r: r.shift_index)
    validate_records(records)
    return records


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, dt.date):
        return value.isoformat()
    return str(value)


def save_shift_csv(records: Iterable[ShiftRecord], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SHIFT_COLUMNS)
        for rec in records:
            writer.writerow([_format_cell(getattr(rec, f.name)) for f in fields(ShiftRecord)])
    return path


# ---------------------------------------------------------------------------
# hourly rain


def load_rain_csv(path: str | Path) -> HourlyRain:
    """Read ``timestamp,precip_mm``; an empty amount cell means missing."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"rain file not found: {path}")
    stamps, amounts = [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if tuple(header) != RAIN_COLUMNS:
            raise ValidationError(f"{path}: expected header {','.join(RAIN_COLUMNS)}, got {header}")
        for line_no, cells in enumerate(reader, start=2):
            if not cells:
                continue
            try:
                stamps.append(dt.datetime.fromisoformat(cells[0].strip()))
                text = cells[1].strip() if len(cells) > 1 else ""
                amounts.append(float(text) if text else math.nan)
            except ValueError:
                raise ValidationError(f"{path}: row {line_no}: cannot parse {cells!r}") from None
    return HourlyRain(np.array(stamps, dtype="datetime64[m]"), np.array(amounts, dtype=float))


def save_rain_csv(series: HourlyRain, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RAIN_COLUMNS)
        for ts, amount in zip(series.timestamps, series.amounts):
            stamp = ts.astype(dt.datetime).isoformat(timespec="minutes")
            writer.writerow([stamp, "" if np.isnan(amount) else repr(float(amount))])
    return path


def _to_hourly_grid(series: HourlyRain) -> HourlyRain:
    """Insert NaN rows for absent hours so spacing is exactly one hour."""
    ts = series.timestamps
    offsets = (ts - ts[0]) / _HOUR
    if not np.allclose(offsets, np.round(offsets)):
        raise DataError("rain timestamps are not on a common hourly grid")
    slots = np.round(offsets).astype(np.int64)
    grid = np.full(slots[-1] + 1, np.nan)
    grid[slots] = series.amounts
    return HourlyRain(ts[0] + np.arange(slots[-1] + 1) * _HOUR, grid)


def fill_gaps(series: HourlyRain, max_gap: int) -> tuple[HourlyRain, list[GapFlag]]:
    """Interpolate short interior runs of missing hours; flag the rest.

    Runs of at most ``max_gap`` hours bounded by observations on both sides
    are filled linearly. Longer runs and runs touching either end of the
    series are left missing and reported.
    """
    if len(series) == 0:
        raise DataError("cannot repair an empty rain series")
    if max_gap < 0:
        raise DataError(f"max_gap must be >= 0, got {max_gap}")
    grid = _to_hourly_grid(series)
    values = grid.amounts.copy()
    missing = np.isnan(values)
    flags = []
    n = len(values)
    i = 0
    while i < n:
        if not missing[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and missing[j + 1]:
            j += 1
        run = j - i + 1
        at_boundary = i == 0 or j == n - 1
        if at_boundary or run > max_gap:
            flags.append(
                GapFlag(
                    start=grid.timestamps[i].astype(dt.datetime),
                    end=grid.timestamps[j].astype(dt.datetime),
                    n_hours=run,
                    reason="boundary" if at_boundary else "too long",
                )
            )
        else:
            left, right = values[i - 1], values[j + 1]
            steps = np.arange(1, run + 1) / (run + 1)
            values[i : j + 1] = left + (right - left) * steps
        i = j + 1
    return HourlyRain(grid.timestamps, values), flags


def aggregate_rain_to_shifts(
    series: HourlyRain,
    calendar: ShiftCalendar,
    shifts: Sequence[tuple[dt.date, str]],
) -> np.ndarray:
    """Sum hourly amounts into per-shift totals.

    An hourly value is credited to a shift when its timestamp lies in the
    shift's catchment (operating window plus preceding changeover gap).
    """
    if len(series):
        series = _to_hourly_grid(series)
    ts = series.timestamps
    out = np.zeros(len(shifts))
    for k, (date, kind) in enumerate(shifts):
        if kind not in SHIFT_KINDS:
            raise ValidationError(f"unknown shift kind {kind!r}")
        lo, hi = calendar.catchment(date, kind)
        lo64 = np.datetime64(lo, "m")
        hi64 = np.datetime64(hi, "m")
        if len(ts) == 0 or ts[0] > lo64 or ts[-1] + _HOUR < hi64:
            raise CoverageError(f"rain series does not cover shift window [{lo}, {hi}) for {date} {kind}")
        a = np.searchsorted(ts, lo64, side="left")
        b = np.searchsorted(ts, hi64, side="left")
        chunk = series.amounts[a:b]
        if np.isnan(chunk).any():
            raise CoverageError(f"missing rain values inside shift window [{lo}, {hi}) for {date} {kind}")
        out[k] = chunk.sum()
    return out
