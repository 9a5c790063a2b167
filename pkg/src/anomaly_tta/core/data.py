"""时间序列数据读取、标准化、滑动窗口与合成趋势漂移数据生成

所有函数都是纯函数：输入不被修改，可在多线程中并发调用。
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import (
    CellParseError,
    DataError,
    DatasetNotFoundError,
    FileEncodingError,
    FileFormatError,
    LabelError,
    ShapeMismatchError,
    ValidationError,
)
from .logging_config import get_logger, get_metrics

logger = get_logger(__name__)
metrics = get_metrics()

STD_FLOOR = 1e-8

PathLike = Union[str, Path]


@dataclass
class TimeSeriesDataset:
    """N 个时间步 × F 个特征的数值矩阵，附带可选的逐时间步二值标签"""

    values: np.ndarray
    labels: Optional[np.ndarray] = None
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"数据集必须是非空的 N×F 矩阵，实际形状 {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("数据集包含 NaN 或 Inf")
        self.values = values

        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (values.shape[0],):
                raise ShapeMismatchError("labels", (values.shape[0],), labels.shape)
            if not np.all((labels == 0) | (labels == 1)):
                raise LabelError("标签只能为 0 或 1")
            self.labels = labels.astype(np.int64)

        if not self.feature_names:
            self.feature_names = [f"f{j + 1}" for j in range(values.shape[1])]
        elif len(self.feature_names) != values.shape[1]:
            raise ShapeMismatchError("feature_names", values.shape[1], len(self.feature_names))

    @property
    def n_timesteps(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.values.shape[1])

    def slice(self, start: int, stop: int) -> "TimeSeriesDataset":
        """返回 [start, stop) 时间步的子数据集"""
        return TimeSeriesDataset(
            values=self.values[start:stop].copy(),
            labels=None if self.labels is None else self.labels[start:stop].copy(),
            feature_names=list(self.feature_names),
        )


@dataclass
class Scaler:
    """按特征的标准化参数，只由训练数据拟合"""

    mean: np.ndarray
    std: np.ndarray

    def transform(self, ds: TimeSeriesDataset) -> TimeSeriesDataset:
        return apply_scaler(ds, self)

    def inverse(self, ds: TimeSeriesDataset) -> TimeSeriesDataset:
        """逆变换: x = z·std + mean"""
        self._check(ds)
        return TimeSeriesDataset(
            values=ds.values * self.std + self.mean,
            labels=ds.labels,
            feature_names=list(ds.feature_names),
        )

    def _check(self, ds: TimeSeriesDataset) -> None:
        if ds.n_features != self.mean.shape[0]:
            raise ShapeMismatchError("scaler 特征数", self.mean.shape[0], ds.n_features)


@dataclass
class Window:
    """数据集中连续 w 个时间步 [end_index-w+1, end_index]"""

    data: np.ndarray
    end_index: int

    @property
    def start_index(self) -> int:
        return self.end_index - self.data.shape[0] + 1


@dataclass
class SyntheticSpec:
    """单变量正弦 + 突变水平漂移 + 点异常的合成数据规格"""

    length_train: int = 2000
    length_test: int = 2000
    period: int = 50
    amplitude: float = 1.0
    shift_at: int = 1000
    shift_magnitude: float = 5.0
    anomaly_count: int = 10
    anomaly_magnitude: float = 3.0
    noise_std: float = 0.05
    seed: int = 7

    def validate(self) -> None:
        if self.length_train < 1 or self.length_test < 1:
            raise ValidationError("训练/测试长度必须 ≥ 1", field="length")
        if self.period < 1:
            raise ValidationError("period 必须 ≥ 1", field="period", value=self.period)
        if not 0 < self.shift_at < self.length_test:
            raise ValidationError(
                "shift_at 必须满足 0 < shift_at < length_test", field="shift_at", value=self.shift_at
            )
        if not 0 <= self.anomaly_count < self.length_test / 10:
            raise ValidationError(
                "anomaly_count 必须满足 0 ≤ anomaly_count < length_test / 10",
                field="anomaly_count",
                value=self.anomaly_count,
            )
        if self.noise_std < 0:
            raise ValidationError("noise_std 不能为负", field="noise_std", value=self.noise_std)
        if len(_anomaly_candidates(self)) < self.anomaly_count:
            raise ValidationError("保护带外的位置不足以放置全部异常", field="anomaly_count")


def read_csv_file(path: PathLike, **kwargs) -> pd.DataFrame:
    """
    读取 UTF-8 CSV 为 DataFrame，把 pandas 的解析异常转换为文件异常

    Args:
        path: CSV 文件路径
        **kwargs: 透传给 pd.read_csv

    Raises:
        DatasetNotFoundError: 文件不存在
        FileEncodingError: 不是合法的 UTF-8
        FileFormatError: 空文件或字段数不一致
    """
    file_path = Path(path)
    if not file_path.exists():
        logger.error(f"文件不存在: {file_path}")
        raise DatasetNotFoundError(str(file_path))
    try:
        frame = pd.read_csv(file_path, encoding="utf-8", **kwargs)
    except UnicodeDecodeError as e:
        raise FileEncodingError(str(file_path), "utf-8", details={"position": e.start}) from e
    except pd.errors.EmptyDataError as e:
        raise FileFormatError(str(file_path), "文件为空") from e
    except pd.errors.ParserError as e:
        raise FileFormatError(str(file_path), str(e).strip()) from e
    metrics.log_file_io(str(file_path), file_path.stat().st_size)
    return frame


def load_csv(
    path: PathLike, label_column: Optional[str] = None, label_required: bool = True
) -> TimeSeriesDataset:
    """
    读取 CSV 数据集

    首行必须为表头；label_column 指定时该列作为标签（取值必须字面为 "0"/"1"），
    其余列按表头顺序作为特征。

    Args:
        path: CSV 文件路径
        label_column: 标签列名（可选）
        label_required: 为 False 时标签列缺失视为无标签数据

    Returns:
        TimeSeriesDataset

    Raises:
        DatasetNotFoundError: 文件不存在
        FileEncodingError / FileFormatError: 文件不是合法的 UTF-8 CSV
        CellParseError: 单元格无法解析为有限实数（行号按文件行计，表头为第 1 行）
        LabelError: 标签列缺失或取值不在 {0,1}
    """
    file_path = Path(path)
    # 全部按字符串读入，逐列解析以便定位坏单元格
    df = read_csv_file(file_path, dtype=str, keep_default_na=False)

    if df.shape[0] < 1:
        raise DataError(f"文件没有数据行: {file_path}")

    labels = None
    if label_column is not None and (label_required or label_column in df.columns):
        if label_column not in df.columns:
            raise LabelError(
                f"标签列不存在: {label_column}",
                column=label_column,
                details={"available_columns": df.columns.tolist()},
            )
        raw = df.pop(label_column)
        bad = ~raw.isin(["0", "1"])
        if bad.any():
            idx = int(np.flatnonzero(bad.to_numpy())[0])
            raise LabelError(
                f"标签取值不在 {{0,1}}: 第 {idx + 2} 行, 值 {raw.iloc[idx]!r}",
                column=label_column,
                details={"row": idx + 2},
            )
        labels = raw.astype(np.int64).to_numpy()

    if df.shape[1] < 1:
        raise DataError(f"文件没有特征列: {file_path}")

    columns = []
    for name in df.columns:
        columns.append(_parse_feature_column(df[name], str(name), str(file_path)))

    ds = TimeSeriesDataset(
        values=np.column_stack(columns),
        labels=labels,
        feature_names=[str(c) for c in df.columns],
    )
    logger.info(
        f"[DATA] 读取 {file_path.name}: N={ds.n_timesteps}, F={ds.n_features}, "
        f"标签={'有' if labels is not None else '无'}"
    )
    return ds


def _parse_feature_column(col: pd.Series, name: str, file_path: str) -> np.ndarray:
    """把单列解析为有限 float64，失败时报告第一个坏单元格"""
    coerced = pd.to_numeric(col, errors="coerce")
    bad = coerced.isna().to_numpy()
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise CellParseError(file_path, row=idx + 2, column=name, value=col.iloc[idx])
    # 逐个字符串 float() 解析，保证与写出时的最短表示精确往返
    values = col.to_numpy(dtype=object).astype(np.float64)
    nonfinite = ~np.isfinite(values)
    if nonfinite.any():
        idx = int(np.flatnonzero(nonfinite)[0])
        raise CellParseError(file_path, row=idx + 2, column=name, value=col.iloc[idx])
    return values


def write_csv(ds: TimeSeriesDataset, path: PathLike, label_column: str = "label") -> Path:
    """
    以读取格式写出数据集（浮点数按最短往返表示，可被 load_csv 精确还原）

    Args:
        ds: 数据集
        path: 输出路径
        label_column: 标签列名（数据集有标签时写出）

    Returns:
        输出文件路径
    """
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(ds.values, columns=ds.feature_names)
    if ds.labels is not None:
        frame[label_column] = ds.labels
    frame.to_csv(out, index=False, lineterminator="\n", encoding="utf-8")
    metrics.log_file_io(str(out), out.stat().st_size, write=True)
    return out


def fit_scaler(train: TimeSeriesDataset) -> Scaler:
    """
    由训练数据拟合标准化参数（总体标准差，下限 1e-8）

    Args:
        train: 训练数据集（N ≥ 2）

    Returns:
        Scaler
    """
    if train.n_timesteps < 2:
        raise ValidationError("拟合 scaler 至少需要 2 个时间步", field="N", value=train.n_timesteps)
    mean = train.values.mean(axis=0)
    std = np.maximum(train.values.std(axis=0, ddof=0), STD_FLOOR)
    flat = int(np.sum(std == STD_FLOOR))
    if flat:
        logger.warning(f"[DATA] {flat} 个特征为常数，标准差取下限 {STD_FLOOR}")
    return Scaler(mean=mean, std=std)


def apply_scaler(ds: TimeSeriesDataset, s: Scaler) -> TimeSeriesDataset:
    """out[i,j] = (in[i,j] − mean[j]) / std[j]，标签原样保留"""
    s._check(ds)
    return TimeSeriesDataset(
        values=(ds.values - s.mean) / s.std,
        labels=ds.labels,
        feature_names=list(ds.feature_names),
    )


def window_array(ds: TimeSeriesDataset, w: int, stride: int) -> tuple[np.ndarray, np.ndarray]:
    """
    滑动窗口切分，返回堆叠数组

    Args:
        ds: 数据集
        w: 窗口长度
        stride: 步长

    Returns:
        (windows, end_indices)，windows 形状为 (count, w, F)，
        count = floor((N − w) / stride) + 1，尾部不足 w 的部分丢弃
    """
    if w < 1 or stride < 1:
        raise ValidationError("窗口长度和步长必须 ≥ 1", field="window", value=(w, stride))
    if w > ds.n_timesteps:
        raise ValidationError(
            f"窗口长度 {w} 大于序列长度 {ds.n_timesteps}", field="window", value=w
        )
    # (N-w+1, F, w) -> (N-w+1, w, F)
    view = sliding_window_view(ds.values, w, axis=0).transpose(0, 2, 1)
    windows = np.ascontiguousarray(view[::stride])
    end_indices = np.arange(w - 1, ds.n_timesteps, stride)[: windows.shape[0]]
    return windows, end_indices


def make_windows(ds: TimeSeriesDataset, w: int, stride: int) -> list[Window]:
    """按时间顺序返回窗口列表，窗口结束于 t = w−1, w−1+stride, …"""
    windows, ends = window_array(ds, w, stride)
    return [Window(data=windows[k], end_index=int(ends[k])) for k in range(windows.shape[0])]


def _anomaly_candidates(spec: SyntheticSpec) -> np.ndarray:
    idx = np.arange(spec.length_test)
    return idx[np.abs(idx - spec.shift_at) > spec.period]


def generate_synthetic(spec: SyntheticSpec) -> tuple[TimeSeriesDataset, TimeSeriesDataset]:
    """
    生成训练/测试合成数据

    训练: amplitude·sin(2πt/period) + 高斯噪声。
    测试: 时间轴接续训练段，动态相同；t ≥ shift_at 处叠加水平漂移 shift_magnitude，
    并在距 shift_at 超过一个周期的位置无放回抽取 anomaly_count 个点叠加尖峰。
    给定 seed 完全确定。

    Args:
        spec: 合成数据规格

    Returns:
        (train, test)，仅 test 带标签
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)

    def signal(t: np.ndarray) -> np.ndarray:
        return spec.amplitude * np.sin(2.0 * np.pi * t / spec.period)

    t_train = np.arange(spec.length_train, dtype=np.float64)
    t_test = spec.length_train + np.arange(spec.length_test, dtype=np.float64)

    train_values = signal(t_train) + rng.normal(0.0, spec.noise_std, spec.length_train)
    test_values = signal(t_test) + rng.normal(0.0, spec.noise_std, spec.length_test)
    test_values[spec.shift_at:] += spec.shift_magnitude

    labels = np.zeros(spec.length_test, dtype=np.int64)
    if spec.anomaly_count > 0:
        positions = np.sort(
            rng.choice(_anomaly_candidates(spec), size=spec.anomaly_count, replace=False)
        )
        test_values[positions] += spec.anomaly_magnitude
        labels[positions] = 1

    train = TimeSeriesDataset(values=train_values, feature_names=["value"])
    test = TimeSeriesDataset(values=test_values, labels=labels, feature_names=["value"])
    logger.debug(f"[DATA] 合成数据: seed={spec.seed}, 异常位置数={int(labels.sum())}")
    return train, test
