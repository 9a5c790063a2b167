"""阈值选择：训练分数分位数 (Qp)、F1 最优的 oracle 阈值 (Q*) 以及固定阈值

配置中的写法: "q99", "q99.9", "oracle", "oracle-pa", "fixed:3.25"；
分位数扫描范围写作 "q90:q100:0.5"。
"""

import math
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import LabelError, ShapeMismatchError, ValidationError

KIND_PERCENTILE = "train_percentile"
KIND_ORACLE = "oracle"
KIND_ORACLE_PA = "oracle_pa"
KIND_FIXED = "fixed"

_PERCENTILE_RE = re.compile(r"^q(\d+(?:\.\d+)?)$", re.IGNORECASE)
_SWEEP_RE = re.compile(
    r"^q(\d+(?:\.\d+)?):q(\d+(?:\.\d+)?):(\d+(?:\.\d+)?)$", re.IGNORECASE
)


@dataclass(frozen=True)
class ThresholdSpec:
    """阈值规格，kind 取 train_percentile / oracle / oracle_pa / fixed"""

    kind: str
    p: Optional[float] = None
    value: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind == KIND_PERCENTILE:
            if self.p is None or not 0.0 < self.p <= 100.0:
                raise ValidationError("分位数 p 必须在 (0,100] 内", field="p", value=self.p)
        elif self.kind == KIND_FIXED:
            if self.value is None or not math.isfinite(self.value):
                raise ValidationError("固定阈值必须为有限实数", field="value", value=self.value)
        elif self.kind not in (KIND_ORACLE, KIND_ORACLE_PA):
            raise ValidationError(f"未知阈值类型: {self.kind}", field="kind", value=self.kind)

    @property
    def needs_labels(self) -> bool:
        return self.kind in (KIND_ORACLE, KIND_ORACLE_PA)

    def label(self) -> str:
        """与配置写法一致的文本表示"""
        if self.kind == KIND_PERCENTILE:
            return f"q{self.p:g}"
        if self.kind == KIND_FIXED:
            return f"fixed:{self.value!r}"
        return "oracle" if self.kind == KIND_ORACLE else "oracle-pa"


def parse_threshold_spec(text: str) -> ThresholdSpec:
    """
    解析阈值规格字符串

    Args:
        text: "q99" / "q99.9" / "oracle" / "oracle-pa" / "fixed:3.25"

    Returns:
        ThresholdSpec

    Raises:
        ValidationError: 写法无法识别
    """
    s = text.strip()
    lowered = s.lower()
    if lowered == "oracle":
        return ThresholdSpec(kind=KIND_ORACLE)
    if lowered in ("oracle-pa", "oracle_pa"):
        return ThresholdSpec(kind=KIND_ORACLE_PA)
    if lowered.startswith("fixed:"):
        try:
            return ThresholdSpec(kind=KIND_FIXED, value=float(s.split(":", 1)[1]))
        except ValueError as e:
            raise ValidationError(f"无效的固定阈值: {text}", field="threshold", value=text) from e
    match = _PERCENTILE_RE.match(s)
    if match:
        return ThresholdSpec(kind=KIND_PERCENTILE, p=float(match.group(1)))
    raise ValidationError(
        f"无效的阈值规格: {text}. 支持: qP, oracle, oracle-pa, fixed:X",
        field="threshold",
        value=text,
    )


def parse_percentile_sweep(text: str) -> list[float]:
    """
    解析分位数扫描范围 "qSTART:qSTOP:STEP"（含两端），如 "q90:q100:0.5"

    Returns:
        升序的 p 列表

    Raises:
        ValidationError: 写法无法识别、范围越界或步长非正
    """
    match = _SWEEP_RE.match(text.strip())
    if not match:
        raise ValidationError(
            f"无效的扫描范围: {text}. 格式: qSTART:qSTOP:STEP", field="sweep", value=text
        )
    start, stop, step = (float(g) for g in match.groups())
    if step <= 0.0 or not 0.0 < start <= stop <= 100.0:
        raise ValidationError(
            "扫描范围需满足 0 < START ≤ STOP ≤ 100 且 STEP > 0", field="sweep", value=text
        )
    count = math.floor(round((stop - start) / step, 9)) + 1
    return [round(start + k * step, 9) for k in range(count)]


def percentile_threshold(train_scores: np.ndarray, p: float) -> float:
    """
    最近秩分位数：升序排序后取下标 ceil(p/100·n) − 1 的元素（无插值）

    Args:
        train_scores: 训练分数（任意形状，展平使用）
        p: 分位数，(0, 100]

    Returns:
        阈值 τ
    """
    scores = np.sort(np.asarray(train_scores, dtype=np.float64).ravel())
    if scores.size == 0:
        raise ValidationError("训练分数为空", field="train_scores")
    if not 0.0 < p <= 100.0:
        raise ValidationError("分位数 p 必须在 (0,100] 内", field="p", value=p)
    # 舍入消除 p·n/100 的浮点噪声（如 99.9·1000）
    rank = math.ceil(round(p * scores.size / 100.0, 9))
    return float(scores[max(rank, 1) - 1])


def threshold_table(train_scores: np.ndarray) -> list[tuple[float, float]]:
    """Q90 … Q100（步长 0.1）分位数阈值表"""
    return [
        (p, percentile_threshold(train_scores, p))
        for p in (round(k / 10.0, 1) for k in range(900, 1001))
    ]


def _check_pair(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ShapeMismatchError("分数与标签长度", scores.shape, labels.shape)
    if not np.all((labels == 0) | (labels == 1)):
        raise LabelError("标签只能为 0 或 1")
    if labels.min() == labels.max():
        raise LabelError("oracle 阈值需要标签同时包含 0 和 1")
    return scores, labels.astype(np.int64)


def candidate_thresholds(scores: np.ndarray) -> np.ndarray:
    """升序候选阈值：−∞、相邻不同分数的中点、+∞"""
    distinct = np.unique(np.asarray(scores, dtype=np.float64))
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    return np.concatenate([[-np.inf], mids, [np.inf]])


def oracle_threshold(scores: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """
    穷举全部候选阈值，返回使 F1 最大的 τ（并列时取最小 τ）

    候选 c_k 对应预测集合 {score > c_k} = 第 k 个及以后的不同分数值，
    用逆序累计计数一次算出全部候选的 TP/FP。

    Args:
        scores: 测试分数
        labels: 测试标签（必须同时包含 0 和 1）

    Returns:
        (tau, best_f1)
    """
    scores, labels = _check_pair(scores, labels)
    distinct, inverse = np.unique(scores, return_inverse=True)
    pos = np.bincount(inverse, weights=labels, minlength=distinct.size)
    neg = np.bincount(inverse, weights=1 - labels, minlength=distinct.size)
    # tp[k] = 分数值下标 ≥ k 的正样本数，k = 0..m（k = m 对应 +∞）
    tp = np.concatenate([np.cumsum(pos[::-1])[::-1], [0.0]])
    fp = np.concatenate([np.cumsum(neg[::-1])[::-1], [0.0]])
    total_pos = float(labels.sum())
    denom = 2.0 * tp + fp + (total_pos - tp)
    f1 = np.where(tp > 0, 2.0 * tp / np.where(denom > 0, denom, 1.0), 0.0)
    best = int(np.argmax(f1))
    return float(candidate_thresholds(scores)[best]), float(f1[best])


def oracle_pa_threshold(scores: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """
    穷举全部候选阈值，返回使点调整后 F1 最大的 τ（并列时取最小 τ）

    Returns:
        (tau, best_f1_pa)
    """
    from .metrics import confusion, point_adjust, prf1

    scores, labels = _check_pair(scores, labels)
    best_tau, best_f1 = float("inf"), -1.0
    for tau in candidate_thresholds(scores):
        preds = (scores > tau).astype(np.int64)
        f1 = prf1(confusion(point_adjust(preds, labels), labels))[2]
        if f1 > best_f1:
            best_tau, best_f1 = float(tau), f1
    return best_tau, best_f1


def resolve_threshold(
    spec: ThresholdSpec,
    train_scores: Optional[np.ndarray] = None,
    scores: Optional[np.ndarray] = None,
    labels: Optional[np.ndarray] = None,
) -> float:
    """
    按规格求出数值阈值

    Raises:
        ValidationError: 缺少该规格需要的输入
    """
    if spec.kind == KIND_FIXED:
        return float(spec.value)  # type: ignore[arg-type]
    if spec.kind == KIND_PERCENTILE:
        if train_scores is None:
            raise ValidationError("分位数阈值需要训练分数", field="train_scores")
        return percentile_threshold(train_scores, spec.p)  # type: ignore[arg-type]
    if scores is None or labels is None:
        raise ValidationError("oracle 阈值需要测试分数和标签", field="labels")
    if spec.kind == KIND_ORACLE:
        return oracle_threshold(scores, labels)[0]
    return oracle_pa_threshold(scores, labels)[0]
