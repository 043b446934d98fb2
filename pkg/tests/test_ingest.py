import dataclasses
import datetime as dt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_records
from haulcast.errors import CoverageError, DataError, ValidationError
from haulcast.ingest import (
    SHIFT_COLUMNS,
    HourlyRain,
    ShiftCalendar,
    aggregate_rain_to_shifts,
    fill_gaps,
    load_rain_csv,
    load_shift_csv,
    save_rain_csv,
    save_shift_csv,
)

HOUR = np.timedelta64(60, "m")


def hourly(start, values):
    start = np.datetime64(start, "m")
    return HourlyRain(start + np.arange(len(values)) * HOUR, np.array(values, dtype=float))


def brute_force_assign(stamps, calendar, shifts):
    """Assign each hour by walking the catchment boundaries directly."""
    totals = [0.0] * len(shifts)
    for stamp, amount in stamps:
        for k, (date, kind) in enumerate(shifts):
            if kind == "day":
                lo = dt.datetime.combine(date - dt.timedelta(days=1), calendar.night_shift_start) + dt.timedelta(minutes=630)
            else:
                lo = dt.datetime.combine(date, calendar.day_shift_start) + dt.timedelta(minutes=630)
            start = calendar.day_shift_start if kind == "day" else calendar.night_shift_start
            hi = dt.datetime.combine(date, start) + dt.timedelta(minutes=630)
            if lo <= stamp < hi:
                totals[k] += amount
    return totals


# -- shift CSV ---------------------------------------------------------------


def test_round_trip(tmp_path):
    recs = make_records([100.5, 200.25, 300.125], rain=[0.1, 0.0, 7.3])
    path = save_shift_csv(recs, tmp_path / "s.csv")
    assert path.read_text().splitlines()[0] == ",".join(SHIFT_COLUMNS)
    assert load_shift_csv(path) == recs


def test_round_trip_simulated_is_exact(tmp_path, sim_records):
    path = save_shift_csv(sim_records, tmp_path / "s.csv")
    assert load_shift_csv(path) == sim_records


def test_rows_are_sorted_by_index(tmp_path):
    recs = make_records([1.0, 2.0, 3.0])
    path = save_shift_csv([recs[2], recs[0], recs[1]], tmp_path / "s.csv")
    assert [r.shift_index for r in load_shift_csv(path)] == [0, 1, 2]


def test_negative_payload_names_row(tmp_path):
    recs = make_records([1.0, 2.0, 3.0])
    recs[1] = dataclasses.replace(recs[1], payload=-5.0)
    path = save_shift_csv(recs, tmp_path / "s.csv")
    with pytest.raises(ValidationError, match="row 3.*payload"):
        load_shift_csv(path)


def test_duplicate_index_rejected(tmp_path):
    recs = make_records([1.0, 2.0, 3.0])
    recs[2] = dataclasses.replace(recs[2], shift_index=1)
    with pytest.raises(ValidationError, match="duplicate"):
        load_shift_csv(save_shift_csv(recs, tmp_path / "s.csv"))


def test_unparsable_cell_names_row(tmp_path):
    path = save_shift_csv(make_records([1.0, 2.0]), tmp_path / "s.csv")
    lines = path.read_text().splitlines()
    lines[2] = lines[2].replace("64.0", "fast")
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValidationError, match="row 3.*cycle_time"):
        load_shift_csv(path)


def test_bad_header_and_missing_file(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_shift_csv(tmp_path / "absent.csv")
    path = tmp_path / "bad.csv"
    path.write_text("shift_index,date,tons\n")
    with pytest.raises(ValidationError, match="missing columns"):
        load_shift_csv(path)


def test_night_before_day_rejected(tmp_path):
    recs = make_records([1.0, 2.0])
    recs = [dataclasses.replace(recs[0], shift_kind="night"), dataclasses.replace(recs[1], shift_kind="day")]
    with pytest.raises(ValidationError, match="precedes"):
        load_shift_csv(save_shift_csv(recs, tmp_path / "s.csv"))


# -- gap repair --------------------------------------------------------------


def test_no_missing_is_identity():
    series = hourly("2022-01-01T00:00", [1.0, 2.0, 3.0])
    out, flags = fill_gaps(series, 2)
    assert np.array_equal(out.amounts, series.amounts) and flags == []


def test_single_gap_midpoint():
    out, flags = fill_gaps(hourly("2022-01-01T00:00", [10.0, np.nan, 14.0]), 1)
    assert out.amounts.tolist() == [10.0, 12.0, 14.0] and flags == []


def test_long_run_is_flagged():
    values = [1.0] + [np.nan] * 5 + [2.0]
    out, flags = fill_gaps(hourly("2022-01-01T00:00", values), 3)
    assert np.isnan(out.amounts[1:6]).all()
    assert len(flags) == 1 and flags[0].n_hours == 5 and flags[0].reason == "too long"
    assert flags[0].start == dt.datetime(2022, 1, 1, 1) and flags[0].end == dt.datetime(2022, 1, 1, 5)


def test_boundary_runs_are_never_extrapolated():
    out, flags = fill_gaps(hourly("2022-01-01T00:00", [np.nan, 1.0, 2.0, np.nan]), 10)
    assert np.isnan(out.amounts[[0, 3]]).all()
    assert [f.reason for f in flags] == ["boundary", "boundary"]


def test_absent_rows_count_as_missing():
    stamps = np.array(["2022-01-01T00:00", "2022-01-01T03:00"], dtype="datetime64[m]")
    out, flags = fill_gaps(HourlyRain(stamps, [0.0, 3.0]), 2)
    assert out.amounts.tolist() == [0.0, 1.0, 2.0, 3.0] and flags == []


def test_empty_series_rejected():
    with pytest.raises(DataError):
        fill_gaps(HourlyRain(np.array([], dtype="datetime64[m]"), []), 3)


@given(
    st.lists(st.one_of(st.none(), st.floats(0, 50)), min_size=1, max_size=40),
    st.integers(0, 6),
)
def test_fill_gaps_idempotent_and_preserves_observations(values, max_gap):
    amounts = [np.nan if v is None else v for v in values]
    series = hourly("2022-03-01T00:00", amounts)
    once, _ = fill_gaps(series, max_gap)
    twice, _ = fill_gaps(once, max_gap)
    np.testing.assert_array_equal(once.amounts, twice.amounts)
    observed = ~np.isnan(series.amounts)
    np.testing.assert_array_equal(once.amounts[observed], series.amounts[observed])


# -- aggregation -------------------------------------------------------------


def test_all_zero_series():
    cal = ShiftCalendar()
    shifts = [(dt.date(2022, 1, 2), "day"), (dt.date(2022, 1, 2), "night")]
    series = hourly("2022-01-01T00:00", np.zeros(72))
    assert aggregate_rain_to_shifts(series, cal, shifts).tolist() == [0.0, 0.0]


def test_constant_rate_inside_one_window():
    # 2 mm/h from 05:30 to 16:00: a half hour (1 mm) in the 05:00 bucket, ten full hours after
    values = np.zeros(48)
    values[5] = 1.0
    values[6:16] = 2.0
    series = hourly("2022-01-02T00:00", values)
    cal = ShiftCalendar()
    out = aggregate_rain_to_shifts(series, cal, [(dt.date(2022, 1, 2), "day"), (dt.date(2022, 1, 2), "night")])
    assert out.tolist() == [21.0, 0.0]


def test_one_day_of_rain_splits_between_its_shifts():
    cal = ShiftCalendar()
    date = dt.date(2022, 1, 2)
    values = np.zeros(72)
    values[28:52] = 1.0  # 04:00 on the date through 03:00 the next morning
    series = hourly("2022-01-01T00:00", values)
    shifts = [(date, "day"), (date, "night")]
    out = aggregate_rain_to_shifts(series, cal, shifts)
    stamps = [(t.astype(dt.datetime), a) for t, a in zip(series.timestamps, series.amounts)]
    assert out.tolist() == brute_force_assign(stamps, cal, shifts)
    assert out.sum() == 24.0


def test_calendar_date_rain_is_conserved_with_previous_night():
    cal = ShiftCalendar()
    date = dt.date(2022, 1, 2)
    values = np.zeros(72)
    values[24:48] = 1.0  # midnight to midnight
    series = hourly("2022-01-01T00:00", values)
    shifts = [(date - dt.timedelta(days=1), "night"), (date, "day"), (date, "night")]
    out = aggregate_rain_to_shifts(series, cal, shifts)
    stamps = [(t.astype(dt.datetime), a) for t, a in zip(series.timestamps, series.amounts)]
    assert out.tolist() == brute_force_assign(stamps, cal, shifts)
    assert out.sum() == 24.0


@given(st.lists(st.floats(0, 20), min_size=96, max_size=96))
def test_conservation_over_covered_span(values):
    cal = ShiftCalendar()
    # span from 04:00 day 1 to 04:00 day 5 is tiled exactly by eight catchments
    series = hourly("2022-01-01T04:00", values)
    shifts = [(dt.date(2022, 1, d), k) for d in range(1, 5) for k in ("day", "night")]
    out = aggregate_rain_to_shifts(series, cal, shifts)
    assert out.sum() == pytest.approx(sum(values), rel=1e-12, abs=1e-9)


def test_uncovered_window_reports_coverage():
    series = hourly("2022-01-02T06:00", np.zeros(5))
    with pytest.raises(CoverageError, match="2022-01-02"):
        aggregate_rain_to_shifts(series, ShiftCalendar(), [(dt.date(2022, 1, 2), "day")])


def test_missing_value_inside_window_is_coverage_error():
    values = np.zeros(48)
    values[10] = np.nan
    with pytest.raises(CoverageError):
        aggregate_rain_to_shifts(hourly("2022-01-02T00:00", values), ShiftCalendar(), [(dt.date(2022, 1, 2), "day")])


def test_overlapping_calendar_rejected():
    with pytest.raises(ValidationError):
        ShiftCalendar(dt.time(6, 0), dt.time(12, 0))


def test_rain_csv_round_trip(tmp_path):
    series = hourly("2022-01-01T00:00", [0.0, np.nan, 2.5])
    loaded = load_rain_csv(save_rain_csv(series, tmp_path / "r.csv"))
    np.testing.assert_array_equal(loaded.timestamps, series.timestamps)
    np.testing.assert_array_equal(loaded.amounts, series.amounts)


def test_rain_csv_rejects_unordered(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("timestamp,precip_mm\n2022-01-01T02:00,1\n2022-01-01T01:00,1\n")
    with pytest.raises(DataError, match="increasing"):
        load_rain_csv(path)
