import json
import zipfile

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from granuscore.errors import ArchiveError, CalibrationError, ConfigurationError, DataError, FeatureOrderError
from granuscore.errors import BackendError
from granuscore.scorer.calibration import CalibrationTable, build_calibration, to_percentile
from granuscore.scorer.ensemble import RegressorConfig, TreeEnsemble, train_regressor
from granuscore.scorer.model import GranularityModel, load_model, predict_raw, save_model

FAST = RegressorConfig(max_iterations=200, num_leaves=7, min_data_in_leaf=5, num_threads=1, early_stopping_rounds=30)


# ------------------------------------------------------------------ config


def test_default_hyperparameters():
    c = RegressorConfig()
    assert (c.learning_rate, c.num_leaves, c.min_data_in_leaf) == (0.0257596, 138, 57)
    assert (c.feature_fraction, c.bagging_fraction, c.bagging_freq) == (0.751449, 0.638041, 7)
    assert (c.max_bin, c.max_iterations, c.early_stopping_rounds) == (255, 10_000, 200)
    assert c.boosting == "gbdt" and c.max_depth == -1


@pytest.mark.parametrize("kw", [dict(learning_rate=0), dict(feature_fraction=1.5), dict(bagging_fraction=0),
                                dict(max_iterations=0), dict(boosting="goss")])
def test_invalid_config_rejected(kw):
    with pytest.raises(ConfigurationError):
        RegressorConfig(**kw)


def test_config_round_trip():
    c = RegressorConfig(boosting="dart", seed=9)
    assert RegressorConfig.from_dict(c.to_dict()) == c


# --------------------------------------------------------------- ensemble


def test_stump_hand_trace():
    t = TreeEnsemble.stump(1, 0.5, left_value=1.25, right_value=3.5, n_features=2)
    X = np.array([[9.0, 0.5], [9.0, 0.50001], [-1.0, -7.0]])
    assert t.predict(X).tolist() == [1.25, 3.5, 1.25]


def test_two_trees_add_up():
    a = TreeEnsemble.stump(0, 0.0, 1.0, 2.0, 1).to_dict()
    b = TreeEnsemble.stump(0, 1.0, 0.25, 0.5, 1).to_dict()
    n = len(a["feature"])
    merged = {k: a[k] + b[k] for k in ("feature", "threshold", "value")}
    merged["left"] = a["left"] + [x + n for x in b["left"]]
    merged["right"] = a["right"] + [x + n for x in b["right"]]
    merged["roots"] = [0, n]
    merged["n_features"] = 1
    t = TreeEnsemble.from_dict(merged)
    assert t.predict(np.array([[-1.0], [0.5], [2.0]])).tolist() == [1.25, 2.25, 2.5]


def test_predict_rejects_non_finite_rows():
    t = TreeEnsemble.stump(0, 0.0, 1.0, 2.0, 2)
    with pytest.raises(DataError, match="row 1"):
        t.predict(np.array([[0.0, 0.0], [np.nan, 0.0]]))


def test_bad_split_index_rejected():
    with pytest.raises(DataError):
        TreeEnsemble.stump(3, 0.0, 1.0, 2.0, n_features=2)


def test_flat_arrays_match_lightgbm(rng):
    import lightgbm as lgb

    X = rng.normal(size=(600, 5))
    y = 1 + 3 / (1 + np.exp(-X[:, 0] - 0.5 * X[:, 1] ** 2))
    params = dict(objective="regression", num_leaves=15, learning_rate=0.1, verbose=-1, deterministic=True,
                  num_threads=1, seed=0)
    booster = lgb.train(params, lgb.Dataset(X, y), num_boost_round=40)
    ens = TreeEnsemble.from_lightgbm_dump(booster.dump_model())
    probe = rng.normal(size=(300, 5)) * 1.5
    np.testing.assert_allclose(ens.predict(probe), booster.predict(probe), rtol=0, atol=1e-12)


def test_constant_targets_fit_exactly(rng):
    X = rng.normal(size=(200, 3))
    res = train_regressor((X, np.full(200, 2.5)), (X[:50], np.full(50, 2.5)), FAST)
    assert res.dev_rmse <= 1e-6
    np.testing.assert_allclose(res.ensemble.predict(rng.normal(size=(20, 3))), 2.5, atol=1e-6)


def test_monotone_one_dimensional_target(rng):
    x = np.sort(rng.uniform(-3, 3, size=800))
    y = 1 + 3 / (1 + np.exp(-2 * x))
    res = train_regressor((x[:, None], y), (x[::7, None], y[::7]), FAST)
    grid = np.linspace(x.min(), x.max(), 2000)[:, None]
    pred = res.ensemble.predict(grid)
    assert (np.diff(pred) >= -1e-9).all()


def test_training_is_deterministic(rng):
    X = rng.normal(size=(300, 4))
    y = np.clip(2.5 + X[:, 0], 1, 4)
    a = train_regressor((X, y), (X[:60], y[:60]), FAST)
    b = train_regressor((X, y), (X[:60], y[:60]), FAST)
    assert json.dumps(a.ensemble.to_dict()) == json.dumps(b.ensemble.to_dict())


def test_dart_flag_trains(rng):
    X = rng.normal(size=(200, 3))
    y = np.clip(2.5 + X[:, 0], 1, 4)
    cfg = RegressorConfig(boosting="dart", max_iterations=30, num_leaves=7, min_data_in_leaf=5, num_threads=1)
    res = train_regressor((X, y), (X[:50], y[:50]), cfg)
    assert res.ensemble.n_trees == 30


@pytest.mark.parametrize("bad", ["nan_feature", "target_range", "empty_dev", "width"])
def test_training_input_errors(bad, rng):
    X = rng.normal(size=(40, 3))
    y = np.full(40, 2.0)
    dev = (X[:10], y[:10])
    if bad == "nan_feature":
        X[7, 1] = np.nan
        with pytest.raises(DataError, match="row 7"):
            train_regressor((X, y), dev, FAST)
    elif bad == "target_range":
        y[3] = 4.5
        with pytest.raises(DataError):
            train_regressor((X, y), dev, FAST)
    elif bad == "empty_dev":
        with pytest.raises(ConfigurationError):
            train_regressor((X, y), (X[:0], y[:0]), FAST)
    else:
        with pytest.raises((DataError, ConfigurationError)):
            train_regressor((X, y), (X[:10, :2], y[:10]), FAST)


# ------------------------------------------------------------- calibration


def test_mid_rank_by_hand():
    t = CalibrationTable([1, 2, 3, 4])
    assert to_percentile(2.5, t) == 50.0
    assert to_percentile(2.0, t) == 37.5
    assert to_percentile(0.0, t) == 0.0
    assert to_percentile(9.0, t) == 100.0
    assert to_percentile(2.0, t, "strict") == 25.0
    assert to_percentile(2.0, t, "weak") == 50.0


def test_table_validation():
    with pytest.raises(CalibrationError):
        CalibrationTable([1.0])
    with pytest.raises(CalibrationError):
        CalibrationTable([2.0, 1.0])
    with pytest.raises(CalibrationError):
        CalibrationTable([1.0, np.inf])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=50), st.floats(-6, 6), st.floats(-6, 6))
def test_percentile_monotone_property(table, a, b):
    t = CalibrationTable.from_unsorted(table)
    lo, hi = sorted((a, b))
    for m in ("mid", "strict", "weak"):
        assert to_percentile(lo, t, m) <= to_percentile(hi, t, m)
        assert 0.0 <= to_percentile(lo, t, m) <= 100.0


def test_build_calibration_sorted_and_order_independent():
    scores = {"a": 3.0, "b": 1.0, "c": 2.0, "d": 4.0}
    fn = lambda batch: np.array([scores[t] for t in batch])  # noqa: E731
    t1, rep = build_calibration(fn, ["a", "b", "c", "d"], "x")
    t2, _ = build_calibration(fn, ["d", "c", "b", "a"], "x")
    assert t1.scores.tolist() == [1.0, 2.0, 3.0, 4.0]
    assert t1.scores.tolist() == t2.scores.tolist()
    assert rep["coverage"] == 1.0


def _flaky(bad: set):
    def fn(batch):
        if any(t in bad for t in batch):
            raise BackendError("boom")
        return np.array([float(len(t)) for t in batch])

    return fn


def test_build_calibration_skips_and_reports():
    corpus = [f"w{i:03d}" for i in range(300)]
    table, rep = build_calibration(_flaky({"w007"}), corpus, batch_size=50)
    assert rep["skipped"] == 1 and len(table) == 299
    assert rep["coverage"] == pytest.approx(299 / 300)


def test_build_calibration_fails_above_one_percent():
    corpus = [f"w{i:03d}" for i in range(100)]
    with pytest.raises(CalibrationError):
        build_calibration(_flaky({"w001", "w002"}), corpus, batch_size=10)


# ------------------------------------------------------------------- archive


def test_archive_round_trip_bitwise(trained, provider, hierarchy, tmp_path):
    model = trained[0]
    path = tmp_path / "m.zip"
    save_model(model, path)
    back = load_model(path)
    probes = hierarchy.names[:100]
    a = model.raw_scores(probes, provider)
    b = back.raw_scores(probes, provider)
    assert a.tobytes() == b.tobytes()
    assert back.feature_order_id == model.feature_order_id
    assert back.calibration.scores.tobytes() == model.calibration.scores.tobytes()
    save_model(back, tmp_path / "again.zip")
    assert (tmp_path / "again.zip").read_bytes() == path.read_bytes()


def _rewrite(src, dst, drop=(), manifest_patch=None):
    with zipfile.ZipFile(src) as zin, zipfile.ZipFile(dst, "w") as zout:
        for name in zin.namelist():
            if name in drop:
                continue
            data = zin.read(name)
            if name == "manifest.json" and manifest_patch:
                m = json.loads(data)
                m.update(manifest_patch)
                data = json.dumps(m).encode()
            zout.writestr(name, data)


def test_missing_calibration_section_is_named(trained, tmp_path):
    save_model(trained[0], tmp_path / "m.zip")
    _rewrite(tmp_path / "m.zip", tmp_path / "bad.zip", drop={"calibration.npy"})
    with pytest.raises(ArchiveError, match="calibration.npy"):
        load_model(tmp_path / "bad.zip")


def test_newer_format_version_refused(trained, tmp_path):
    save_model(trained[0], tmp_path / "m.zip")
    _rewrite(tmp_path / "m.zip", tmp_path / "new.zip", manifest_patch={"format_version": 99})
    with pytest.raises(ArchiveError, match="version 99"):
        load_model(tmp_path / "new.zip")


def test_truncated_archive_refused(trained, tmp_path):
    save_model(trained[0], tmp_path / "m.zip")
    data = (tmp_path / "m.zip").read_bytes()
    (tmp_path / "cut.zip").write_bytes(data[: len(data) // 2])
    with pytest.raises(ArchiveError):
        load_model(tmp_path / "cut.zip")


def test_feature_order_mismatch_is_hard_error(trained, provider, hierarchy):
    model = trained[0]
    emb = provider.embed_array(hierarchy.names[:1])
    fv = model.featurizer.features(__import__("granuscore").embedding.EmbeddingVector(emb[0], provider.space))
    assert np.isfinite(predict_raw(model, fv))
    with pytest.raises(FeatureOrderError):
        model.predict_matrix(fv.as_array()[None, :], "0000000000000000")


def test_width_mismatch_rejected(trained):
    model = trained[0]
    with pytest.raises((ConfigurationError, DataError)):
        GranularityModel(TreeEnsemble.stump(0, 0.0, 1.0, 2.0, 3), model.featurizer, model.embedding_model_id,
                         model.regressor)


def test_uncalibrated_model_cannot_give_percentiles(trained):
    m = trained[0]
    bare = GranularityModel(m.ensemble, m.featurizer, m.embedding_model_id, m.regressor)
    with pytest.raises(ConfigurationError):
        bare.percentiles([2.0])
