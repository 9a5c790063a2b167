"""数据读取、标准化、窗口切分与合成数据测试"""

import numpy as np
import pytest

from anomaly_tta.core.data import (
    STD_FLOOR,
    SyntheticSpec,
    TimeSeriesDataset,
    apply_scaler,
    fit_scaler,
    generate_synthetic,
    load_csv,
    make_windows,
    read_csv_file,
    window_array,
    write_csv,
)
from anomaly_tta.core.exceptions import (
    CellParseError,
    DataError,
    DatasetNotFoundError,
    FileEncodingError,
    FileFormatError,
    LabelError,
    ShapeMismatchError,
    ValidationError,
)

from .helpers import dataset


class TestTimeSeriesDataset:
    """TimeSeriesDataset 校验"""

    def test_default_feature_names(self):
        ds = dataset(np.zeros((3, 2)))
        assert ds.feature_names == ["f1", "f2"]
        assert ds.n_timesteps == 3
        assert ds.n_features == 2

    def test_one_dimensional_values_become_single_feature(self):
        ds = dataset([1.0, 2.0, 3.0])
        assert ds.values.shape == (3, 1)

    def test_rejects_nan(self):
        with pytest.raises(DataError):
            dataset([[1.0], [np.nan]])

    def test_rejects_bad_labels(self):
        with pytest.raises(LabelError):
            dataset([[1.0], [2.0]], labels=np.array([0, 2]))

    def test_rejects_label_length_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            dataset([[1.0], [2.0]], labels=np.array([0]))

    def test_slice_keeps_labels(self):
        ds = dataset(np.arange(10.0), labels=np.array([0, 1] * 5))
        part = ds.slice(2, 5)
        assert part.values.ravel().tolist() == [2.0, 3.0, 4.0]
        assert part.labels.tolist() == [0, 1, 0]


class TestLoadCsv:
    """CSV 读取"""

    def test_reads_features_and_labels(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("a,b,label\n1.5,2,0\n-3,4e-3,1\n")
        ds = load_csv(path, label_column="label")
        assert ds.feature_names == ["a", "b"]
        np.testing.assert_array_equal(ds.values, [[1.5, 2.0], [-3.0, 0.004]])
        assert ds.labels.tolist() == [0, 1]

    def test_single_data_row(self, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text("x\n7\n")
        ds = load_csv(path)
        assert ds.values.shape == (1, 1)

    def test_missing_file(self, tmp_path):
        missing = tmp_path / "nope.csv"
        with pytest.raises(DatasetNotFoundError) as exc:
            load_csv(missing)
        assert str(missing) in exc.value.message

    def test_unparseable_cell_reports_row_and_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n3,abc\n")
        with pytest.raises(CellParseError) as exc:
            load_csv(path)
        assert exc.value.details["row"] == 3
        assert exc.value.details["column"] == "b"

    def test_empty_cell_is_parse_error(self, tmp_path):
        path = tmp_path / "gap.csv"
        path.write_text("a,b\n1,\n2,3\n")
        with pytest.raises(CellParseError) as exc:
            load_csv(path)
        assert exc.value.details["row"] == 2

    def test_label_column_missing(self, tmp_path):
        path = tmp_path / "nolabel.csv"
        path.write_text("a\n1\n2\n")
        with pytest.raises(LabelError):
            load_csv(path, label_column="label")
        assert load_csv(path, label_column="label", label_required=False).labels is None

    def test_label_must_be_literal_binary(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("a,label\n1,0\n2,1.0\n")
        with pytest.raises(LabelError):
            load_csv(path, label_column="label")

    def test_write_then_load_is_exact(self, tmp_path, rng):
        ds = TimeSeriesDataset(
            values=rng.normal(size=(50, 3)) * 1e3,
            labels=(rng.random(50) < 0.2).astype(int),
            feature_names=["x", "y", "z"],
        )
        path = write_csv(ds, tmp_path / "rt.csv")
        back = load_csv(path, label_column="label")
        assert np.array_equal(back.values, ds.values)
        assert np.array_equal(back.labels, ds.labels)
        assert back.feature_names == ds.feature_names


class TestMalformedCsv:
    """无法解析的 CSV 文件转换为带路径的文件异常"""

    def test_invalid_utf8(self, tmp_path):
        path = tmp_path / "latin.csv"
        path.write_bytes(b"f1\n1\n\xff\xfe\n")
        with pytest.raises(FileEncodingError) as exc:
            load_csv(path)
        assert exc.value.details["file_path"] == str(path)
        assert exc.value.details["encoding"] == "utf-8"

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_bytes(b"")
        with pytest.raises(FileFormatError) as exc:
            load_csv(path)
        assert exc.value.details["file_path"] == str(path)

    def test_ragged_row(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("f1,f2\n1,2\n3,4,5\n")
        with pytest.raises(FileFormatError) as exc:
            load_csv(path)
        assert exc.value.details["file_path"] == str(path)
        assert exc.value.details["reason"]

    def test_header_only_is_data_error(self, tmp_path):
        path = tmp_path / "header.csv"
        path.write_text("f1,f2\n")
        with pytest.raises(DataError):
            load_csv(path)

    def test_read_csv_file_missing(self, tmp_path):
        with pytest.raises(DatasetNotFoundError):
            read_csv_file(tmp_path / "nope.csv")


class TestScaler:
    """训练统计量标准化"""

    def test_fit_and_apply(self):
        train = dataset([[1.0, 10.0], [3.0, 10.0]])
        scaler = fit_scaler(train)
        np.testing.assert_array_equal(scaler.mean, [2.0, 10.0])
        assert scaler.std[0] == 1.0
        assert scaler.std[1] == STD_FLOOR
        out = apply_scaler(train, scaler)
        np.testing.assert_array_equal(out.values[:, 0], [-1.0, 1.0])
        np.testing.assert_array_equal(out.values[:, 1], [0.0, 0.0])

    def test_inverse_round_trip(self, rng):
        ds = dataset(rng.normal(5.0, 3.0, size=(40, 2)))
        scaler = fit_scaler(ds)
        back = scaler.inverse(scaler.transform(ds))
        np.testing.assert_allclose(back.values, ds.values, rtol=0, atol=1e-12)

    def test_requires_two_timesteps(self):
        with pytest.raises(ValidationError):
            fit_scaler(dataset([[1.0]]))

    def test_feature_mismatch(self):
        scaler = fit_scaler(dataset(np.zeros((3, 2)) + np.arange(3)[:, None]))
        with pytest.raises(ShapeMismatchError):
            apply_scaler(dataset(np.zeros((3, 1))), scaler)

    def test_does_not_mutate_input(self, rng):
        ds = dataset(rng.normal(size=(10, 2)))
        before = ds.values.copy()
        apply_scaler(ds, fit_scaler(ds))
        assert np.array_equal(ds.values, before)


class TestWindows:
    """滑动窗口"""

    def test_non_overlapping(self):
        ds = dataset(np.arange(10.0))
        windows = make_windows(ds, 5, 5)
        assert len(windows) == 2
        assert windows[0].data.ravel().tolist() == [0, 1, 2, 3, 4]
        assert windows[1].end_index == 9

    def test_overlapping(self):
        ds = dataset(np.arange(7.0))
        windows = make_windows(ds, 3, 1)
        assert len(windows) == 5
        assert windows[2].data.ravel().tolist() == [2, 3, 4]
        assert windows[2].start_index == 2

    def test_count_formula_and_dropped_tail(self):
        for n, w, s in [(10, 3, 4), (20, 5, 5), (23, 5, 5), (5, 5, 1), (11, 2, 3)]:
            windows, ends = window_array(dataset(np.arange(float(n))), w, s)
            assert windows.shape[0] == (n - w) // s + 1
            assert ends[0] == w - 1
            assert np.all(np.diff(ends) == s)

    def test_window_longer_than_series(self):
        with pytest.raises(ValidationError):
            make_windows(dataset(np.arange(3.0)), 5, 1)

    def test_multivariate_rows_are_timesteps(self):
        values = np.arange(12.0).reshape(6, 2)
        windows, _ = window_array(dataset(values), 3, 3)
        np.testing.assert_array_equal(windows[1], values[3:6])


class TestSynthetic:
    """合成趋势漂移数据"""

    def test_default_spec_labels(self):
        spec = SyntheticSpec()
        train, test = generate_synthetic(spec)
        assert train.n_timesteps == spec.length_train
        assert test.n_timesteps == spec.length_test
        assert train.labels is None
        assert int(test.labels.sum()) == spec.anomaly_count

    def test_deterministic(self):
        a = generate_synthetic(SyntheticSpec(seed=3))
        b = generate_synthetic(SyntheticSpec(seed=3))
        assert np.array_equal(a[0].values, b[0].values)
        assert np.array_equal(a[1].values, b[1].values)
        assert np.array_equal(a[1].labels, b[1].labels)

    def test_anomalies_outside_guard_band(self):
        spec = SyntheticSpec()
        _, test = generate_synthetic(spec)
        positions = np.flatnonzero(test.labels)
        assert np.all(np.abs(positions - spec.shift_at) > spec.period)

    def test_level_shift_after_shift_at(self):
        spec = SyntheticSpec(anomaly_count=0)
        _, test = generate_synthetic(spec)
        before = test.values[: spec.shift_at].mean()
        after = test.values[spec.shift_at:].mean()
        assert after - before == pytest.approx(spec.shift_magnitude, abs=0.1)

    def test_invalid_spec(self):
        with pytest.raises(ValidationError):
            generate_synthetic(SyntheticSpec(shift_at=0))
        with pytest.raises(ValidationError):
            generate_synthetic(SyntheticSpec(anomaly_count=500))
