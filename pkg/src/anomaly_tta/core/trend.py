"""指数滑动平均趋势估计与窗口去趋势 / 复原

μ_t ← γ·μ_{t−w} + (1−γ)·μ̂，μ̂ 为当前窗口逐特征均值（包含异常行）。
每处理一个窗口更新一次，与测试步长无关。
"""

from dataclasses import dataclass

import numpy as np

from .data import TimeSeriesDataset, Window
from .exceptions import DataError, ShapeMismatchError, ValidationError


@dataclass
class TrendEstimator:
    """逐特征 EMA 趋势状态，单一所有者按流时间顺序更新"""

    mu: np.ndarray
    gamma: float
    initialized: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValidationError("gamma 必须在 [0,1] 内", field="gamma", value=self.gamma)
        self.mu = np.asarray(self.mu, dtype=np.float64).copy()

    def update(self, window: Window) -> np.ndarray:
        """用整个窗口的均值更新 μ 并返回新值（副本）"""
        if not self.initialized:
            raise DataError("趋势估计尚未初始化")
        data = window.data
        if data.ndim != 2 or data.shape[1] != self.mu.shape[0]:
            raise ShapeMismatchError("窗口特征数", self.mu.shape[0], data.shape)
        window_mean = data.mean(axis=0)
        self.mu = self.gamma * self.mu + (1.0 - self.gamma) * window_mean
        return self.mu.copy()


def init_trend(train: TimeSeriesDataset, gamma: float) -> TrendEstimator:
    """以训练数据逐特征全局均值初始化趋势（标准化后约为 0）"""
    if train.n_timesteps < 1:
        raise DataError("训练数据为空")
    return TrendEstimator(mu=train.values.mean(axis=0), gamma=gamma)


def update_trend(est: TrendEstimator, window: Window) -> np.ndarray:
    return est.update(window)


def _check_mu(window: Window, mu: np.ndarray) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64)
    if window.data.ndim != 2 or mu.shape != (window.data.shape[1],):
        raise ShapeMismatchError("趋势向量", (window.data.shape[1],), mu.shape)
    return mu


def detrend(window: Window, mu: np.ndarray) -> Window:
    """out[i,j] = window[i,j] − mu[j]"""
    mu = _check_mu(window, mu)
    return Window(data=window.data - mu, end_index=window.end_index)


def retrend(recon: Window, mu: np.ndarray) -> Window:
    """detrend 的加法逆"""
    mu = _check_mu(recon, mu)
    return Window(data=recon.data + mu, end_index=recon.end_index)
