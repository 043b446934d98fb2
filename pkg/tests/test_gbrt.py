import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from haulcast.errors import ConfigError, DataError, ModelFileError, NumericError
from haulcast.gbrt import GbrtConfig, TreeEnsemble, load_ensemble, predict, save_ensemble, train_gbrt

HAND = dict(n_estimators=1, max_depth=1, learning_rate=1.0, gamma=0.0, min_child_weight=0.0)
X2 = np.array([[0.0], [1.0]])
Y2 = np.array([0.0, 2.0])


def test_no_trees_predicts_the_mean(rng):
    X, y = rng.normal(size=(30, 3)), rng.normal(size=30)
    ens = train_gbrt(X, y, GbrtConfig(n_estimators=0))
    assert np.all(ens.predict(rng.normal(size=(5, 3))) == np.mean(y))
    assert predict(ens, X[0]) == ens.base_score


def test_hand_traced_round_without_penalty():
    ens = train_gbrt(X2, Y2, GbrtConfig(lambda_reg=0.0, **HAND))
    tree = ens.trees[0]
    assert ens.base_score == 1.0
    assert tree.feature[0] == 0 and tree.threshold[0] == 0.5
    assert abs(tree.value[tree.left[0]] + 1.0) < 1e-9 and abs(tree.value[tree.right[0]] - 1.0) < 1e-9
    np.testing.assert_allclose(ens.predict(X2), [0.0, 2.0], atol=1e-9)


def test_hand_traced_round_with_penalty():
    ens = train_gbrt(X2, Y2, GbrtConfig(lambda_reg=1.0, **HAND))
    tree = ens.trees[0]
    assert abs(tree.value[tree.left[0]] + 0.5) < 1e-9 and abs(tree.value[tree.right[0]] - 0.5) < 1e-9
    np.testing.assert_allclose(ens.predict(X2), [0.5, 1.5], atol=1e-9)


def test_threshold_routes_right_on_equality():
    ens = train_gbrt(X2, Y2, GbrtConfig(lambda_reg=0.0, **HAND))
    assert abs(predict(ens, [0.5]) - 2.0) < 1e-9


def test_covers_add_up(rng):
    X, y = rng.normal(size=(200, 4)), rng.normal(size=200)
    for tree in train_gbrt(X, y, GbrtConfig(n_estimators=20)).trees:
        assert np.all(tree.cover > 0)
        internal = np.flatnonzero(tree.feature >= 0)
        np.testing.assert_array_equal(tree.cover[internal], tree.cover[tree.left[internal]] + tree.cover[tree.right[internal]])


def test_depth_limit(rng):
    X, y = rng.normal(size=(300, 5)), rng.normal(size=300)
    for tree in train_gbrt(X, y, GbrtConfig(n_estimators=5, max_depth=2)).trees:
        assert tree.n_nodes <= 7


def test_ties_go_to_lowest_feature():
    X = np.column_stack([[0.0, 1.0, 2.0, 3.0]] * 3)
    ens = train_gbrt(X, np.array([0.0, 0.0, 5.0, 5.0]), GbrtConfig(lambda_reg=0.0, **HAND))
    assert ens.trees[0].feature[0] == 0 and ens.trees[0].threshold[0] == 1.5


def test_gamma_blocks_weak_splits():
    ens = train_gbrt(X2, Y2, GbrtConfig(lambda_reg=0.0, n_estimators=1, max_depth=1, gamma=5.0))
    assert ens.trees[0].n_nodes == 1


def test_min_child_weight_blocks_small_leaves():
    ens = train_gbrt(X2, Y2, GbrtConfig(lambda_reg=0.0, n_estimators=1, max_depth=1, min_child_weight=2.0))
    assert ens.trees[0].n_nodes == 1


def test_mse_non_increasing_over_full_run(sim_records):
    X = np.array([[r.working_trucks, r.cycle_time, r.precipitation, r.working_shovels] for r in sim_records])
    y = np.array([r.payload for r in sim_records])
    ens = train_gbrt(X, y)
    mse = np.array(ens.train_mse)
    assert len(mse) == 1001
    assert np.all(mse[1:] <= mse[:-1] * (1 + 1e-12))


def test_batch_equals_rowwise(rng):
    X, y = rng.normal(size=(80, 3)), rng.normal(size=80)
    ens = train_gbrt(X, y, GbrtConfig(n_estimators=30))
    batch = ens.predict(X[:10])
    assert batch.tolist() == [predict(ens, row) for row in X[:10]]


def test_deterministic(rng):
    X, y = rng.normal(size=(100, 4)), rng.normal(size=100)
    a = train_gbrt(X, y, GbrtConfig(n_estimators=15))
    b = train_gbrt(X, y, GbrtConfig(n_estimators=15))
    assert [t.to_dict() for t in a.trees] == [t.to_dict() for t in b.trees]


def test_constant_target_shift(rng):
    X, y = rng.normal(size=(120, 3)), rng.normal(size=120) * 10
    a = train_gbrt(X, y, GbrtConfig(n_estimators=25))
    b = train_gbrt(X, y + 1000.0, GbrtConfig(n_estimators=25))
    for ta, tb in zip(a.trees, b.trees):
        assert np.array_equal(ta.feature, tb.feature) and np.array_equal(ta.threshold, tb.threshold)
    np.testing.assert_allclose(b.predict(X) - a.predict(X), 1000.0, rtol=0, atol=1e-9)


def test_save_load_bit_exact(tmp_path, rng):
    X, y = rng.normal(size=(150, 4)), rng.normal(size=150) * 1e3
    ens = train_gbrt(X, y, GbrtConfig(n_estimators=40), feature_names=list("abcd"))
    ens.meta = {"note": "x"}
    path = save_ensemble(ens, tmp_path / "m.json")
    back = load_ensemble(path)
    assert [t.to_dict() for t in back.trees] == [t.to_dict() for t in ens.trees]
    assert back.base_score == ens.base_score and back.feature_names == ens.feature_names
    assert back.config == ens.config and back.meta == ens.meta
    assert np.array_equal(back.predict(X), ens.predict(X))
    assert save_ensemble(back, tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_bad_model_files(tmp_path):
    with pytest.raises(ModelFileError):
        load_ensemble(tmp_path / "missing.json")
    junk = tmp_path / "junk.json"
    junk.write_text("{not json")
    with pytest.raises(ModelFileError):
        load_ensemble(junk)
    other = tmp_path / "other.json"
    other.write_text('{"format": "something-else", "version": 1}')
    with pytest.raises(ModelFileError):
        load_ensemble(other)


def test_input_errors(rng):
    with pytest.raises(DataError):
        train_gbrt(np.empty((0, 2)), np.empty(0))
    with pytest.raises(NumericError):
        train_gbrt(np.array([[np.nan]]), np.array([1.0]))
    ens = train_gbrt(rng.normal(size=(10, 2)), rng.normal(size=10), GbrtConfig(n_estimators=2))
    with pytest.raises(DataError):
        ens.predict(np.zeros((1, 3)))
    with pytest.raises(NumericError):
        ens.predict(np.array([[np.inf, 0.0]]))


@pytest.mark.parametrize("field, value", [("learning_rate", 0.0), ("max_depth", 0), ("n_estimators", -1), ("gamma", -1.0)])
def test_config_validation(field, value):
    with pytest.raises(ConfigError, match=field):
        GbrtConfig(**{field: value})


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=30), st.integers(0, 2**32 - 1))
def test_training_never_raises_mse(values, seed):
    y = np.array(values)
    X = np.random.default_rng(seed).normal(size=(len(y), 2))
    mse = train_gbrt(X, y, GbrtConfig(n_estimators=10, learning_rate=0.3)).train_mse
    assert all(b <= a * (1 + 1e-12) + 1e-300 for a, b in zip(mse, mse[1:]))


def test_ensemble_is_sum_of_trees(rng):
    X, y = rng.normal(size=(60, 3)), rng.normal(size=60)
    ens = train_gbrt(X, y, GbrtConfig(n_estimators=8, learning_rate=0.1))
    manual = ens.base_score + ens.learning_rate * sum(t.predict(X) for t in ens.trees)
    np.testing.assert_allclose(ens.predict(X), manual, rtol=0, atol=1e-12)
    assert isinstance(ens, TreeEnsemble)
