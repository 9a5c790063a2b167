"""评估指标：混淆计数、P/R/F1、点调整 (PA)、AUROC、AUPRC 与 KLD 漂移诊断

全部为纯函数。
"""

from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
from sklearn.metrics import average_precision_score, roc_auc_score

from .data import TimeSeriesDataset
from .exceptions import LabelError, ShapeMismatchError, ValidationError
from .logging_config import get_logger
from .threshold import ThresholdSpec, resolve_threshold

logger = get_logger(__name__)


@dataclass(frozen=True)
class ConfusionCounts:
    tn: int
    fp: int
    fn: int
    tp: int

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp


def _binary_pair(preds: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    preds = np.asarray(preds).ravel()
    labels = np.asarray(labels).ravel()
    if preds.shape != labels.shape:
        raise ShapeMismatchError("预测与标签长度", labels.shape, preds.shape)
    for name, arr in (("预测", preds), ("标签", labels)):
        if not np.all((arr == 0) | (arr == 1)):
            raise LabelError(f"{name}只能为 0 或 1")
    return preds.astype(np.int64), labels.astype(np.int64)


def confusion(preds: np.ndarray, labels: np.ndarray) -> ConfusionCounts:
    """逐时间步混淆计数"""
    preds, labels = _binary_pair(preds, labels)
    return ConfusionCounts(
        tn=int(np.sum((preds == 0) & (labels == 0))),
        fp=int(np.sum((preds == 1) & (labels == 0))),
        fn=int(np.sum((preds == 0) & (labels == 1))),
        tp=int(np.sum((preds == 1) & (labels == 1))),
    )


def prf1(c: ConfusionCounts) -> tuple[float, float, float, float]:
    """
    (precision, recall, f1, accuracy)，分母为 0 时对应指标取 0；空计数的 accuracy 取 1

    f1 按 2tp / (2tp + fp + fn) 计算，与调和平均等价。
    """
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f1 = 2 * c.tp / (2 * c.tp + c.fp + c.fn) if c.tp else 0.0
    accuracy = (c.tp + c.tn) / c.total if c.total else 1.0
    return float(precision), float(recall), float(f1), float(accuracy)


def point_adjust(preds: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """
    点调整：对每段连续的 label==1，若段内任一点被预测为异常，则整段置为 1

    label==0 位置的预测保持不变。
    """
    preds, labels = _binary_pair(preds, labels)
    adjusted = preds.copy()
    # 段边界: 在两端补 0 后做差分，+1 为段起点，-1 为段终点（开区间）
    edges = np.diff(np.concatenate([[0], labels, [0]]))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    for start, stop in zip(starts, stops):
        if adjusted[start:stop].any():
            adjusted[start:stop] = 1
    return adjusted


def _check_scores(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ShapeMismatchError("分数与标签长度", labels.shape, scores.shape)
    if not np.all((labels == 0) | (labels == 1)):
        raise LabelError("标签只能为 0 或 1")
    return scores, labels.astype(np.int64)


def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """ROC 曲线下面积，等价于 P(正 > 负) + ½·P(并列)"""
    scores, labels = _check_scores(scores, labels)
    if labels.min() == labels.max():
        raise LabelError("AUROC 需要标签同时包含 0 和 1")
    return float(roc_auc_score(labels, scores))


def auprc(scores: np.ndarray, labels: np.ndarray) -> float:
    """阶梯式平均精度（并列分数作为一个整体处理，不做线性插值）"""
    scores, labels = _check_scores(scores, labels)
    if labels.sum() == 0:
        raise LabelError("AUPRC 需要至少一个正样本")
    if labels.min() == 1:
        return 1.0
    return float(average_precision_score(labels, scores))


@dataclass(frozen=True)
class KldResult:
    per_feature: list[float]
    total: float


def kld_shift(train: TimeSeriesDataset, test: TimeSeriesDataset, bins: int = 50) -> KldResult:
    """
    D_KL(p_test ‖ p_train) 漂移诊断

    每个特征在两组数据合并后的 [min, max] 上共享分箱；各自的直方图概率加上
    ε = 1/(10·该组样本数) 平滑后再归一化。

    Args:
        train: 训练数据
        test: 测试数据
        bins: 分箱数（≥ 2）

    Returns:
        KldResult（逐特征值与总和）
    """
    if bins < 2:
        raise ValidationError("bins 必须 ≥ 2", field="bins", value=bins)
    if train.n_features != test.n_features:
        raise ShapeMismatchError("特征数", train.n_features, test.n_features)

    def smoothed(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
        counts, _ = np.histogram(values, bins=edges)
        p = counts / values.size + 1.0 / (10.0 * values.size)
        return p / p.sum()

    per_feature = []
    for j in range(train.n_features):
        edges = np.histogram_bin_edges(
            np.concatenate([train.values[:, j], test.values[:, j]]), bins=bins
        )
        p_test = smoothed(test.values[:, j], edges)
        p_train = smoothed(train.values[:, j], edges)
        per_feature.append(float(np.sum(p_test * np.log(p_test / p_train))))
    return KldResult(per_feature=per_feature, total=float(sum(per_feature)))


def false_positives_after(preds: np.ndarray, labels: np.ndarray, start: int) -> int:
    """时间步 ≥ start 的误报数"""
    preds, labels = _binary_pair(preds, labels)
    return int(np.sum((preds[start:] == 1) & (labels[start:] == 0)))


@dataclass
class EvalReport:
    """一次评估的全部指标，对应结果表中的一行"""

    counts: ConfusionCounts
    counts_pa: ConfusionCounts
    accuracy: float
    precision: float
    recall: float
    f1: float
    accuracy_pa: float
    precision_pa: float
    recall_pa: float
    f1_pa: float
    auroc: Optional[float]
    auprc: Optional[float]
    tau: float
    threshold_spec: str

    def to_dict(self) -> dict[str, Any]:
        """扁平 JSON 对象，列名与结果明细表一致，'+' 后缀为点调整结果"""
        out: dict[str, Any] = {
            "Thr": self.threshold_spec,
            "tau": self.tau if np.isfinite(self.tau) else str(self.tau),
            "Acc": self.accuracy,
            "Prec": self.precision,
            "Rec": self.recall,
            "F1": self.f1,
            "AUROC": self.auroc,
            "AUPRC": self.auprc,
            "TN": self.counts.tn,
            "FP": self.counts.fp,
            "FN": self.counts.fn,
            "TP": self.counts.tp,
            "Acc+": self.accuracy_pa,
            "Prec+": self.precision_pa,
            "Rec+": self.recall_pa,
            "F1+": self.f1_pa,
            "TN+": self.counts_pa.tn,
            "FP+": self.counts_pa.fp,
            "FN+": self.counts_pa.fn,
            "TP+": self.counts_pa.tp,
        }
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EvalReport":
        tau = data["tau"]
        return cls(
            counts=ConfusionCounts(tn=data["TN"], fp=data["FP"], fn=data["FN"], tp=data["TP"]),
            counts_pa=ConfusionCounts(
                tn=data["TN+"], fp=data["FP+"], fn=data["FN+"], tp=data["TP+"]
            ),
            accuracy=data["Acc"],
            precision=data["Prec"],
            recall=data["Rec"],
            f1=data["F1"],
            accuracy_pa=data["Acc+"],
            precision_pa=data["Prec+"],
            recall_pa=data["Rec+"],
            f1_pa=data["F1+"],
            auroc=data["AUROC"],
            auprc=data["AUPRC"],
            tau=float(tau),
            threshold_spec=data["Thr"],
        )


def report_from_predictions(
    scores: np.ndarray,
    preds: np.ndarray,
    labels: np.ndarray,
    tau: float,
    threshold_spec: str,
) -> EvalReport:
    """
    由给定预测构造评估报告（流式运行时预测已在处理窗口时确定）

    标签只有一类时 AUROC / AUPRC 置为 None 并记录警告。
    """
    scores, labels = _check_scores(scores, labels)
    counts = confusion(preds, labels)
    counts_pa = confusion(point_adjust(preds, labels), labels)
    precision, recall, f1, accuracy = prf1(counts)
    precision_pa, recall_pa, f1_pa, accuracy_pa = prf1(counts_pa)

    roc: Optional[float] = None
    pr: Optional[float] = None
    if labels.min() != labels.max():
        roc = auroc(scores, labels)
        pr = auprc(scores, labels)
    else:
        logger.warning("[EVAL] 标签只有一类，AUROC/AUPRC 置为 null")

    return EvalReport(
        counts=counts,
        counts_pa=counts_pa,
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        accuracy_pa=accuracy_pa,
        precision_pa=precision_pa,
        recall_pa=recall_pa,
        f1_pa=f1_pa,
        auroc=roc,
        auprc=pr,
        tau=float(tau),
        threshold_spec=threshold_spec,
    )


def evaluate(
    scores: np.ndarray,
    labels: np.ndarray,
    spec: ThresholdSpec,
    train_scores: Optional[np.ndarray] = None,
) -> EvalReport:
    """
    按阈值规格对分数重新阈值化并生成评估报告

    Args:
        scores: 逐时间步分数
        labels: 逐时间步标签
        spec: 阈值规格
        train_scores: 训练分数（分位数阈值需要）

    Returns:
        EvalReport
    """
    scores, labels = _check_scores(scores, labels)
    tau = resolve_threshold(spec, train_scores=train_scores, scores=scores, labels=labels)
    preds = (scores > tau).astype(np.int64)
    return report_from_predictions(scores, preds, labels, tau, spec.label())

