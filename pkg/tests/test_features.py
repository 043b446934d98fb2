import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_records
from haulcast.errors import AlignmentError, DataError
from haulcast.features import (
    ABLATION_FEATURE,
    FEATURE_NAMES,
    apply_feature_scaler,
    build_features,
    chronological_split,
    fit_feature_scaler,
    inverse_target,
    load_feature_csv,
    make_sequences,
    save_feature_csv,
    scale_target,
    split_point,
)
from haulcast.fleetmc import fit_fleet_regressor, predict_fleet
from oracles import brute_force_features


def flat_forecasts(n, trucks=10.0, shovels=4.0):
    return np.tile([trucks, shovels], (n, 1))


def test_sixteen_named_features():
    assert len(FEATURE_NAMES) == 16 and len(set(FEATURE_NAMES)) == 16


def test_constant_series_identities():
    recs = make_records([100.0] * 12)
    ds = build_features(recs, flat_forecasts(12))
    assert np.all(ds.columns["payload_lag1"] == 100)
    assert np.all(ds.columns["payload_rolling_sum_4"] == 400)
    assert np.all(ds.columns["working_trucks_mean4"] == 10)
    assert np.all(ds.columns["precipitation_sum6"] == 0)
    assert np.all(ds.target == 100)


def test_payload_ramp_row():
    ds = build_features(make_records([float(v) for v in range(1, 11)]), flat_forecasts(10))
    row = list(ds.origin).index(6)
    assert ds.columns["payload_lag1"][row] == 6
    assert ds.columns["payload_rolling_sum_4"][row] == 22
    assert ds.target[row] == 8


def test_row_drop_rule():
    ds = build_features(make_records([1.0] * 10), flat_forecasts(10))
    assert len(ds) == 4
    assert ds.origin.tolist() == [5, 6, 7, 8]


def test_next_fields_come_from_following_shift():
    recs = make_records([1.0] * 12, rain=[float(i) for i in range(12)])
    fc = np.arange(24, dtype=float).reshape(12, 2)
    ds = build_features(recs, fc)
    t = 7
    row = list(ds.origin).index(t)
    assert ds.columns["crew_next"][row] == recs[t + 1].crew
    assert ds.columns["shift_next"][row] == (1.0 if recs[t + 1].shift_kind == "night" else 0.0)
    assert ds.columns["precipitation_next"][row] == t + 1
    assert ds.columns["predicted_working_trucks_next"][row] == fc[t, 0]
    assert ds.columns["predicted_working_shovels_next"][row] == fc[t, 1]


def test_brute_force_oracle_on_simulated_shifts(sim_records):
    fc = flat_forecasts(len(sim_records))
    ds = build_features(sim_records, fc)
    payload = [r.payload for r in sim_records]
    trucks = [r.working_trucks for r in sim_records]
    rain = [r.precipitation for r in sim_records]
    expected = brute_force_features(payload, trucks, rain)
    assert len(ds) == len(expected) == len(sim_records) - 6
    for name in expected[0]:
        got = ds.target if name == "target_next_payload" else ds.columns[name]
        assert got.tolist() == [row[name] for row in expected], name


def test_ablation_feature_is_true_next_trucks():
    recs = make_records([1.0] * 12, trucks=list(range(12)))
    ds = build_features(recs, flat_forecasts(12), include_true_next_trucks=True)
    assert ds.raw_names[-1] == ABLATION_FEATURE
    assert ds.columns[ABLATION_FEATURE].tolist() == (ds.origin + 1).tolist()


def test_input_errors():
    with pytest.raises(DataError):
        build_features(make_records([1.0] * 7), flat_forecasts(7))
    with pytest.raises(AlignmentError):
        build_features(make_records([1.0] * 10), flat_forecasts(9))


def test_one_hot_and_unseen_crew():
    ds = build_features(make_records([1.0] * 14), flat_forecasts(14))
    X = ds.matrix()
    assert ds.feature_names[:4] == ["crew_next_A", "crew_next_B", "crew_next_C", "crew_next_D"]
    assert np.all(X[:, :4].sum(axis=1) == 1)
    with pytest.raises(DataError, match="crew"):
        ds.matrix(crews=("A", "B"))


# -- scaling -----------------------------------------------------------------


def _dataset_with_column(values):
    n = len(values) + 6
    recs = make_records([1.0] * n, rain=[0.0] * 5 + list(values) + [0.0])
    return build_features(recs, flat_forecasts(n))


def test_minmax_endpoints_constant_and_out_of_range():
    ds = _dataset_with_column([0.0, 5.0, 10.0])
    sc = fit_feature_scaler(ds)
    j = ds.feature_names.index("precipitation")
    X = apply_feature_scaler(sc, ds.matrix())
    assert X[:, j].tolist() == [0.0, 0.5, 1.0]
    assert np.all(X[:, ds.feature_names.index("payload")] == 0.0)  # constant column
    probe = ds.matrix()[:1].copy()
    probe[0, j] = 15.0
    assert apply_feature_scaler(sc, probe)[0, j] == 1.5


def test_target_scaling_inverts(sim_records):
    ds = build_features(sim_records, flat_forecasts(len(sim_records)))
    sc = fit_feature_scaler(ds)
    np.testing.assert_allclose(inverse_target(sc, scale_target(sc, ds.target)), ds.target, rtol=1e-12)


def test_scaler_uses_training_rows_only(sim_records):
    ds = build_features(sim_records, flat_forecasts(len(sim_records)))
    train, _ = chronological_split(ds)
    sc = fit_feature_scaler(train)
    assert np.array_equal(sc.maxs, train.matrix().max(axis=0))
    assert sc.target_max == train.target.max()


# -- split and windows -------------------------------------------------------


@pytest.mark.parametrize("n, train, test", [(100, 80, 20), (5, 4, 1), (1895, 1516, 379)])
def test_split_sizes(n, train, test):
    assert split_point(n, 0.8) == train
    assert n - split_point(n, 0.8) == test


def test_split_is_chronological(sim_records):
    ds = build_features(sim_records, flat_forecasts(len(sim_records)))
    train, test = chronological_split(ds)
    assert train.origin.max() < test.origin.min()
    assert len(train) + len(test) == len(ds)
    with pytest.raises(DataError):
        chronological_split(ds.take(slice(0, 1)))


@pytest.mark.parametrize("n, expected", [(10, 1), (12, 3), (9, 0)])
def test_window_counts(n, expected):
    X = np.arange(n * 2, dtype=float).reshape(n, 2)
    windows, targets, ends = make_sequences(X, np.arange(n, dtype=float), 10)
    assert len(windows) == len(targets) == expected


@given(st.integers(1, 40), st.integers(1, 12))
def test_windows_are_consecutive_rows(n, lookback):
    X = np.arange(n, dtype=float)[:, None] * np.ones((1, 3))
    windows, targets, ends = make_sequences(X, np.arange(n, dtype=float) * 10, lookback)
    assert len(windows) == max(0, n - lookback + 1)
    for w, y, e in zip(windows, targets, ends):
        assert w[:, 0].tolist() == list(range(e - lookback + 1, e + 1))
        assert y == 10 * e


def test_non_consecutive_origin_rejected():
    with pytest.raises(DataError):
        make_sequences(np.zeros((4, 1)), np.zeros(4), 2, origin=[0, 1, 3, 4])


def test_feature_csv_round_trip(tmp_path, sim_records):
    split = split_point(len(sim_records))
    model = fit_fleet_regressor(sim_records[:split])
    ds = build_features(sim_records, predict_fleet(model, sim_records), include_true_next_trucks=True)
    loaded = load_feature_csv(save_feature_csv(ds, tmp_path / "f.csv"))
    assert loaded.raw_names == ds.raw_names and loaded.crews == ds.crews
    assert np.array_equal(loaded.matrix(), ds.matrix())
    assert np.array_equal(loaded.target, ds.target) and np.array_equal(loaded.origin, ds.origin)


def test_feature_rows_have_no_missing_values(sim_records):
    model = fit_fleet_regressor(sim_records[:800])
    ds = build_features(sim_records, predict_fleet(model, sim_records))
    assert np.all(np.isfinite(ds.matrix()))
