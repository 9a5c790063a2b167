"""测试时适应的流式循环

每个窗口严格按顺序执行：
    1. 更新趋势估计（原始窗口，含异常行）并去趋势（DT 开启时）
    2. 在去趋势空间重构并逐时间步评分
    3. score > τ 判为异常
    4. 以预测为掩码，只在预测正常的行上做一步 SGD（TTA 开启时）
    5. windows_processed += 1

状态严格串行：第 k+1 个窗口依赖第 k 个窗口之后的状态。
"""

from dataclasses import dataclass, field, asdict
from typing import Any, Optional

import numpy as np

from .checkpoint import (
    KIND_SNAPSHOT,
    Checkpoint,
    model_arrays,
    model_from,
    model_meta,
    pack_container,
    unpack_container,
)
from .data import TimeSeriesDataset, Window, make_windows, window_array
from .exceptions import ConfigError, DivergenceError, ShapeMismatchError, ValidationError
from .logging_config import get_logger, get_metrics
from .model import MlpAutoencoder, forward, gradients, score, score_windows, sgd_step
from .trend import TrendEstimator, detrend

logger = get_logger(__name__)
metrics = get_metrics()


@dataclass
class AdaptationConfig:
    """流式适应超参数与消融开关

    use_tta 关闭时忽略 eta；use_detrend 关闭时忽略 gamma。
    """

    gamma: float
    eta: float
    tau: float
    w: int
    use_detrend: bool = True
    use_tta: bool = True

    def validate(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValidationError("gamma 必须在 [0,1] 内", field="gamma", value=self.gamma)
        if self.eta < 0.0:
            raise ValidationError("eta 不能为负", field="eta", value=self.eta)
        if self.w < 1:
            raise ValidationError("窗口长度必须 ≥ 1", field="w", value=self.w)
        if np.isnan(self.tau):
            raise ValidationError("阈值不能为 NaN", field="tau")

    @property
    def variant(self) -> str:
        if self.use_detrend and self.use_tta:
            return "DT+TTA"
        if self.use_detrend:
            return "DT"
        if self.use_tta:
            return "TTA"
        return "none"


@dataclass
class AdaptationState:
    """流式适应的可变状态（单一所有者）"""

    model: MlpAutoencoder
    trend: TrendEstimator
    config: AdaptationConfig
    windows_processed: int = 0
    sgd_steps: int = 0
    skipped_updates: int = 0

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint, config: AdaptationConfig) -> "AdaptationState":
        """由离线检查点创建初始状态，趋势初值为标准化后的训练均值"""
        config.validate()
        if ckpt.model.dims.window != config.w:
            raise ShapeMismatchError("窗口长度", ckpt.model.dims.window, config.w)
        return cls(
            model=ckpt.model.copy(),
            trend=TrendEstimator(mu=ckpt.train_mean, gamma=config.gamma),
            config=config,
        )

    def copy(self) -> "AdaptationState":
        return AdaptationState(
            model=self.model.copy(),
            trend=TrendEstimator(
                mu=self.trend.mu, gamma=self.trend.gamma, initialized=self.trend.initialized
            ),
            config=AdaptationConfig(**asdict(self.config)),
            windows_processed=self.windows_processed,
            sgd_steps=self.sgd_steps,
            skipped_updates=self.skipped_updates,
        )


@dataclass
class StreamResult:
    """整条测试流的逐时间步轨迹

    timesteps 为被覆盖的时间步下标；每个时间步取第一个覆盖它的窗口的分数与预测。
    """

    timesteps: np.ndarray
    scores: np.ndarray
    preds: np.ndarray
    mu: np.ndarray
    window_ends: np.ndarray
    mu_trace: np.ndarray
    extra: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.timesteps.shape[0])


def process_window(state: AdaptationState, window: Window) -> tuple[np.ndarray, np.ndarray]:
    """
    处理一个窗口并推进状态

    Args:
        state: 适应状态（原地修改）
        window: 原始（已标准化、未去趋势）窗口

    Returns:
        (scores, preds)，长度均为 w

    Raises:
        DivergenceError: 分数或梯度非有限，携带窗口序号
    """
    cfg = state.config
    index = state.windows_processed
    expected = (state.model.dims.window, state.model.dims.n_features)
    if window.data.shape != expected:
        raise ShapeMismatchError("窗口", expected, window.data.shape)

    if cfg.use_detrend:
        state.trend.update(window)
        x = detrend(window, state.trend.mu)
    else:
        x = window

    scores = score(state.model, x, forward(state.model, x))
    if not np.all(np.isfinite(scores)):
        logger.error(f"[STREAM] 第 {index} 个窗口分数非有限，终止")
        raise DivergenceError(f"第 {index} 个窗口分数非有限", window_index=index)
    preds = (scores > cfg.tau).astype(np.int64)

    if cfg.use_tta:
        if preds.all():
            # 全部被掩码：梯度恒为 0，参数不变
            state.skipped_updates += 1
        else:
            grads = gradients(state.model, x, preds)
            if not grads.all_finite():
                logger.error(f"[STREAM] 第 {index} 个窗口梯度非有限，终止")
                raise DivergenceError(f"第 {index} 个窗口梯度非有限", window_index=index)
            sgd_step(state.model, grads, cfg.eta)
            if cfg.eta > 0.0:
                state.sgd_steps += 1

    state.windows_processed += 1
    return scores, preds


def _new_rows(end: int, prev_end: Optional[int], w: int) -> slice:
    """窗口中尚未被先前窗口覆盖的行"""
    if prev_end is None:
        return slice(0, w)
    return slice(max(0, w - (end - prev_end)), w)


def run_stream(state: AdaptationState, test: TimeSeriesDataset, stride: int) -> StreamResult:
    """
    按时间顺序把测试集的全部窗口送入 process_window，汇总逐时间步轨迹

    Args:
        state: 适应状态（原地修改）
        test: 已标准化的测试集（长度 ≥ w）
        stride: 测试步长，等于 w 时每个被覆盖的时间步恰好评分一次

    Returns:
        StreamResult
    """
    w = state.config.w
    windows = make_windows(test, w, stride)
    steps, scores, preds, mus = [], [], [], []
    ends, trace = [], []
    prev_end: Optional[int] = None
    for window in windows:
        s, p = process_window(state, window)
        rows = _new_rows(window.end_index, prev_end, w)
        steps.append(np.arange(window.start_index, window.end_index + 1)[rows])
        scores.append(s[rows])
        preds.append(p[rows])
        mus.append(np.repeat(state.trend.mu[None, :], s[rows].shape[0], axis=0))
        ends.append(window.end_index)
        trace.append(state.trend.mu.copy())
        prev_end = window.end_index

    result = StreamResult(
        timesteps=np.concatenate(steps),
        scores=np.concatenate(scores),
        preds=np.concatenate(preds),
        mu=np.concatenate(mus),
        window_ends=np.asarray(ends, dtype=np.int64),
        mu_trace=np.stack(trace),
        extra={
            "windows_processed": state.windows_processed,
            "sgd_steps": state.sgd_steps,
            "skipped_updates": state.skipped_updates,
        },
    )
    metrics.log_stream(len(windows), state.sgd_steps, state.skipped_updates)
    logger.info(
        f"[STREAM] {state.config.variant}: 窗口 {len(windows)}, 时间步 {len(result)}, "
        f"预测异常 {int(result.preds.sum())}, SGD 步 {state.sgd_steps}, "
        f"跳过更新 {state.skipped_updates}"
    )
    return result


def offline_scores(
    model: MlpAutoencoder, test: TimeSeriesDataset, w: int, stride: int
) -> tuple[np.ndarray, np.ndarray]:
    """
    纯离线推理（不去趋势、不更新），时间步对齐方式与 run_stream 相同

    Returns:
        (timesteps, scores)
    """
    windows, ends = window_array(test, w, stride)
    per_window = score_windows(model, windows)
    steps, scores = [], []
    prev_end: Optional[int] = None
    for k, end in enumerate(ends):
        rows = _new_rows(int(end), prev_end, w)
        steps.append(np.arange(end - w + 1, end + 1)[rows])
        scores.append(per_window[k][rows])
        prev_end = int(end)
    return np.concatenate(steps), np.concatenate(scores)


def reference_scores(
    ckpt: Checkpoint, use_detrend: bool, gamma: float, stride: int
) -> np.ndarray:
    """
    分位数阈值所依据的训练分数

    不去趋势时即离线训练分数。去趋势时把训练序列按测试流的方式重新走一遍
    （同一 γ、同一步长、趋势从训练均值出发、不更新模型），逐窗口去趋势后评分，
    使 Qp 与去趋势变体的测试分数处于同一空间。

    Args:
        ckpt: 离线训练检查点（不会被修改）
        use_detrend: 目标变体是否去趋势
        gamma: 趋势 EMA 系数
        stride: 测试步长

    Returns:
        (窗口数, w) 分数矩阵

    Raises:
        ConfigError: 检查点没有保存训练序列
    """
    if not use_detrend:
        return ckpt.train_scores
    if ckpt.train_values is None:
        raise ConfigError(
            "检查点缺少训练序列，无法计算去趋势分位数阈值", config_key="checkpoint_path"
        )
    w = ckpt.model.dims.window
    state = AdaptationState.from_checkpoint(
        ckpt,
        AdaptationConfig(
            gamma=gamma, eta=0.0, tau=float("inf"), w=w, use_detrend=True, use_tta=False
        ),
    )
    train = TimeSeriesDataset(values=ckpt.train_values, feature_names=list(ckpt.feature_names))
    scores = np.stack([process_window(state, window)[0] for window in make_windows(train, w, stride)])
    logger.debug(f"[STREAM] 去趋势训练分数: {scores.shape[0]} 个窗口, gamma={gamma}, stride={stride}")
    return scores


def snapshot(state: AdaptationState) -> bytes:
    """把适应状态序列化为容器字节（与检查点同一格式）"""
    meta = {
        **model_meta(state.model),
        "config": asdict(state.config),
        "gamma": state.trend.gamma,
        "initialized": state.trend.initialized,
        "windows_processed": state.windows_processed,
        "sgd_steps": state.sgd_steps,
        "skipped_updates": state.skipped_updates,
    }
    arrays = {**model_arrays(state.model), "mu": state.trend.mu}
    return pack_container(KIND_SNAPSHOT, meta, arrays)


def restore(blob: bytes) -> AdaptationState:
    """
    由快照字节恢复状态；恢复后继续运行与未中断的运行结果一致

    Raises:
        SnapshotVersionError: 版本不匹配
        CorruptSnapshotError: 内容损坏
    """
    meta, arrays = unpack_container(blob, KIND_SNAPSHOT)
    return AdaptationState(
        model=model_from(meta, arrays),
        trend=TrendEstimator(
            mu=arrays["mu"], gamma=float(meta["gamma"]), initialized=bool(meta["initialized"])
        ),
        config=AdaptationConfig(**meta["config"]),
        windows_processed=int(meta["windows_processed"]),
        sgd_steps=int(meta["sgd_steps"]),
        skipped_updates=int(meta["skipped_updates"]),
    )
