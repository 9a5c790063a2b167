"""展平窗口上的 MLP 自编码器

结构固定为 [w·F → h → d → h → w·F]，除最后一层外均接 ReLU（0 处次梯度取 0）。
前向、评分、掩码损失与解析梯度均为纯函数；sgd_step 与 train_offline 原地修改模型。
离线训练用 Adam，测试时更新用不带动量的 SGD。
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .data import Window
from .exceptions import DivergenceError, ShapeMismatchError, ValidationError
from .logging_config import get_logger

logger = get_logger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class AutoencoderDims:
    """(w, F, h, d) 完全决定参数形状"""

    window: int
    n_features: int
    hidden: int
    latent: int

    @property
    def input_size(self) -> int:
        return self.window * self.n_features

    def layer_sizes(self) -> list[int]:
        return [self.input_size, self.hidden, self.latent, self.hidden, self.input_size]


@dataclass
class Gradients:
    """与模型参数同形状的梯度集合"""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self.arrays())


@dataclass
class MlpAutoencoder:
    """四层对称 MLP 自编码器，权重形状为 (fan_in, fan_out)"""

    dims: AutoencoderDims
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int = 0

    def parameter_count(self) -> int:
        return int(sum(w.size for w in self.weights) + sum(b.size for b in self.biases))

    def copy(self) -> "MlpAutoencoder":
        return MlpAutoencoder(
            dims=self.dims,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            seed=self.seed,
        )

    def get_params(self) -> np.ndarray:
        """按 W1..W4, b1..b4 顺序展平的参数副本"""
        return np.concatenate([a.ravel() for a in (*self.weights, *self.biases)])

    def set_params(self, flat: np.ndarray) -> None:
        offset = 0
        for a in (*self.weights, *self.biases):
            a[...] = flat[offset:offset + a.size].reshape(a.shape)
            offset += a.size
        if offset != flat.size:
            raise ShapeMismatchError("参数向量长度", offset, flat.size)

    def params_equal(self, other: "MlpAutoencoder") -> bool:
        return all(
            np.array_equal(a, b)
            for a, b in zip((*self.weights, *self.biases), (*other.weights, *other.biases))
        )


def init_model(w: int, n_features: int, hidden: int, latent: int, seed: int) -> MlpAutoencoder:
    """
    Glorot 均匀初始化权重，偏置置零；给定 seed 完全确定

    Args:
        w: 窗口长度
        n_features: 特征数 F
        hidden: 隐层宽度 h
        latent: 潜变量维度 d
        seed: 随机种子

    Returns:
        MlpAutoencoder
    """
    if min(w, n_features, hidden, latent) < 1:
        raise ValidationError(
            "所有维度必须 ≥ 1", field="dims", value=(w, n_features, hidden, latent)
        )
    dims = AutoencoderDims(window=w, n_features=n_features, hidden=hidden, latent=latent)
    rng = np.random.default_rng(seed)
    sizes = dims.layer_sizes()
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpAutoencoder(dims=dims, weights=weights, biases=biases, seed=seed)


def _check_window(m: MlpAutoencoder, data: np.ndarray) -> None:
    expected = (m.dims.window, m.dims.n_features)
    if data.shape != expected:
        raise ShapeMismatchError("窗口", expected, data.shape)


def _forward_cached(m: MlpAutoencoder, x_flat: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """前向传播，返回 (各层输入, 各层预激活)，供反向传播使用"""
    inputs, pre = [], []
    a = x_flat
    last = len(m.weights) - 1
    for k, (W, b) in enumerate(zip(m.weights, m.biases)):
        inputs.append(a)
        z = a @ W + b
        pre.append(z)
        a = z if k == last else np.maximum(z, 0.0)
    inputs.append(a)
    return inputs, pre


def _backward(
    m: MlpAutoencoder, inputs: list[np.ndarray], pre: list[np.ndarray], d_out: np.ndarray
) -> Gradients:
    """反向模式链式法则；d_out 为损失对输出的梯度，形状 (n, w·F)"""
    n_layers = len(m.weights)
    d_weights: list[np.ndarray] = [np.empty(0)] * n_layers
    d_biases: list[np.ndarray] = [np.empty(0)] * n_layers
    delta = d_out
    for k in range(n_layers - 1, -1, -1):
        if k != n_layers - 1:
            delta = delta * (pre[k] > 0.0)
        d_weights[k] = inputs[k].T @ delta
        d_biases[k] = delta.sum(axis=0)
        if k > 0:
            delta = delta @ m.weights[k].T
    return Gradients(weights=d_weights, biases=d_biases)


def forward(m: MlpAutoencoder, x: Window) -> Window:
    """窗口按行主序展平后前向传播，再还原为 w×F"""
    _check_window(m, x.data)
    inputs, _ = _forward_cached(m, x.data.reshape(1, -1))
    return Window(data=inputs[-1].reshape(x.data.shape), end_index=x.end_index)


def score(m: MlpAutoencoder, x: Window, recon: Window) -> np.ndarray:
    """逐时间步异常分数: score[i] = (1/F)·Σ_j (recon[i,j] − x[i,j])²"""
    _check_window(m, x.data)
    if recon.data.shape != x.data.shape:
        raise ShapeMismatchError("重构窗口", x.data.shape, recon.data.shape)
    return np.mean((recon.data - x.data) ** 2, axis=1)


def _check_mask(mask: np.ndarray, rows: int) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.shape != (rows,):
        raise ShapeMismatchError("掩码", (rows,), mask.shape)
    if not np.all((mask == 0) | (mask == 1)):
        raise ValidationError("掩码只能为 0/1", field="mask")
    return mask.astype(bool)


def masked_loss(x: Window, recon: Window, mask: np.ndarray) -> tuple[float, np.ndarray]:
    """
    仅在预测为正常的行上计算重构误差

    loss = Σ_i (1 − mask[i])·Σ_j (recon[i,j] − x[i,j])² / (正常行数·F)，全被掩码时为 0。

    Args:
        x: 目标窗口
        recon: 重构窗口
        mask: 长度 w 的 0/1 向量，1 表示预测为异常（被排除）

    Returns:
        (loss, 每行未归一化的贡献)
    """
    if recon.data.shape != x.data.shape:
        raise ShapeMismatchError("重构窗口", x.data.shape, recon.data.shape)
    excluded = _check_mask(mask, x.data.shape[0])
    row_sq = np.sum((recon.data - x.data) ** 2, axis=1)
    per_row = np.where(excluded, 0.0, row_sq)
    active = int(np.sum(~excluded))
    if active == 0:
        return 0.0, per_row
    return float(per_row.sum() / (active * x.data.shape[1])), per_row


def gradients(
    m: MlpAutoencoder, x: Window, mask: np.ndarray, target: Optional[Window] = None
) -> Gradients:
    """
    掩码损失对全部权重和偏置的解析梯度

    Args:
        m: 模型
        x: 输入窗口
        mask: 长度 w 的 0/1 向量（1 = 排除）
        target: 重构目标，默认即输入窗口

    Returns:
        Gradients，全部被掩码时所有梯度精确为 0
    """
    _check_window(m, x.data)
    target_data = x.data if target is None else target.data
    if target_data.shape != x.data.shape:
        raise ShapeMismatchError("目标窗口", x.data.shape, target_data.shape)
    excluded = _check_mask(mask, x.data.shape[0])

    inputs, pre = _forward_cached(m, x.data.reshape(1, -1))
    recon = inputs[-1].reshape(x.data.shape)
    active = int(np.sum(~excluded))
    if active == 0:
        d_recon = np.zeros_like(recon)
    else:
        residual = np.where(excluded[:, None], 0.0, recon - target_data)
        d_recon = 2.0 * residual / (active * x.data.shape[1])
    return _backward(m, inputs, pre, d_recon.reshape(1, -1))


def sgd_step(m: MlpAutoencoder, grads: Gradients, eta: float) -> MlpAutoencoder:
    """
    θ ← θ − η·∇θ，普通 SGD（无动量、无权重衰减），原地更新

    Raises:
        ValidationError: eta < 0
        DivergenceError: 梯度非有限
    """
    if eta < 0:
        raise ValidationError("eta 不能为负", field="eta", value=eta)
    if not grads.all_finite():
        raise DivergenceError("梯度出现 NaN 或 Inf")
    if eta == 0.0:
        return m
    for W, dW in zip(m.weights, grads.weights):
        W -= eta * dW
    for b, db in zip(m.biases, grads.biases):
        b -= eta * db
    return m


WindowBatch = Union[np.ndarray, Sequence[Window]]


def _stack(windows: WindowBatch) -> np.ndarray:
    if isinstance(windows, np.ndarray):
        return windows
    return np.stack([w.data for w in windows]) if len(windows) else np.empty((0, 0, 0))


def score_windows(m: MlpAutoencoder, windows: WindowBatch) -> np.ndarray:
    """
    离线批量推理，逐窗口调用与流式处理相同的前向路径

    Returns:
        形状 (n_windows, w) 的分数矩阵
    """
    stacked = _stack(windows)
    out = np.empty((stacked.shape[0], m.dims.window))
    for k in range(stacked.shape[0]):
        x = Window(data=stacked[k], end_index=k)
        out[k] = score(m, x, forward(m, x))
    return out


class AdamOptimizer:
    """Adam 优化器，用于离线训练

    Args:
        model: 要更新的模型
        lr: 学习率
    """

    def __init__(self, model: MlpAutoencoder, lr: float) -> None:
        self.model = model
        self.lr = lr
        self.t = 0
        params = [*model.weights, *model.biases]
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: Gradients) -> None:
        self.t += 1
        params = [*self.model.weights, *self.model.biases]
        for k, (p, g) in enumerate(zip(params, grads.arrays())):
            self.m[k] = ADAM_BETA1 * self.m[k] + (1 - ADAM_BETA1) * g
            self.v[k] = ADAM_BETA2 * self.v[k] + (1 - ADAM_BETA2) * g ** 2
            m_hat = self.m[k] / (1 - ADAM_BETA1 ** self.t)
            v_hat = self.v[k] / (1 - ADAM_BETA2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


@dataclass
class TrainResult:
    """离线训练结果"""

    model: MlpAutoencoder
    train_scores: np.ndarray
    epoch_losses: list[float] = field(default_factory=list)


def train_offline(
    m: MlpAutoencoder,
    windows: WindowBatch,
    epochs: int,
    batch_size: int,
    lr: float,
    seed: int,
) -> TrainResult:
    """
    离线最小化未掩码的均方重构误差（Adam，按 seed 确定的乱序小批量）

    Args:
        m: 模型（原地训练）
        windows: 训练窗口，(n, w, F) 数组或 Window 序列
        epochs: 训练轮数，0 表示不训练
        batch_size: 批大小
        lr: 学习率
        seed: 乱序种子

    Returns:
        TrainResult，含训练后每个窗口的逐时间步分数和每轮平均损失

    Raises:
        DivergenceError: 损失非有限（报告 epoch / batch）
    """
    stacked = _stack(windows)
    if stacked.shape[0] < 1:
        raise ValidationError("训练至少需要一个窗口", field="windows")
    if stacked.shape[1:] != (m.dims.window, m.dims.n_features):
        raise ShapeMismatchError("训练窗口", (m.dims.window, m.dims.n_features), stacked.shape[1:])
    if batch_size < 1 or epochs < 0:
        raise ValidationError("batch_size ≥ 1 且 epochs ≥ 0", field="training")

    flat = stacked.reshape(stacked.shape[0], -1)
    n = flat.shape[0]
    rng = np.random.default_rng(seed)
    optimizer = AdamOptimizer(m, lr)
    epoch_losses: list[float] = []

    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for batch_idx, start in enumerate(range(0, n, batch_size)):
            batch = flat[order[start:start + batch_size]]
            inputs, pre = _forward_cached(m, batch)
            residual = inputs[-1] - batch
            loss = float(np.mean(residual ** 2))
            if not np.isfinite(loss):
                logger.error(f"[TRAIN] 损失非有限: epoch={epoch}, batch={batch_idx}")
                raise DivergenceError(
                    f"训练损失非有限: epoch={epoch}, batch={batch_idx}",
                    epoch=epoch,
                    batch=batch_idx,
                )
            d_out = 2.0 * residual / residual.size
            optimizer.step(_backward(m, inputs, pre, d_out))
            total += loss * batch.shape[0]
        epoch_losses.append(total / n)
        logger.debug(f"[TRAIN] epoch {epoch + 1}/{epochs} loss={epoch_losses[-1]:.6f}")

    if epochs:
        logger.info(f"[TRAIN] 训练完成: {epochs} 轮, 最终损失 {epoch_losses[-1]:.6f}")
    return TrainResult(model=m, train_scores=score_windows(m, stacked), epoch_losses=epoch_losses)
