"""训练、单变体检测与 {none, DT, TTA, DT+TTA} × seeds 消融网格

命令行各子命令共用这里的流程，保证 train / detect / ablate 产出一致。
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .adaptation import (
    AdaptationConfig,
    AdaptationState,
    StreamResult,
    reference_scores,
    run_stream,
)
from .checkpoint import Checkpoint
from .config import RunConfig
from .data import TimeSeriesDataset, apply_scaler, fit_scaler, window_array
from .exceptions import ConfigError
from .logging_config import get_logger
from .metrics import (
    EvalReport,
    evaluate,
    false_positives_after,
    report_from_predictions,
)
from .model import TrainResult, init_model, train_offline
from .threshold import (
    KIND_PERCENTILE,
    ThresholdSpec,
    parse_percentile_sweep,
    parse_threshold_spec,
    resolve_threshold,
)

logger = get_logger(__name__)

# (名称, use_detrend, use_tta)，顺序即结果表行序
VARIANTS: tuple[tuple[str, bool, bool], ...] = (
    ("none", False, False),
    ("DT", True, False),
    ("TTA", False, True),
    ("DT+TTA", True, True),
)
METRIC_KEYS = ("F1", "F1-PA", "AUROC", "AUPRC")


def train_detector(
    train_raw: TimeSeriesDataset, config: RunConfig, seed: int
) -> tuple[Checkpoint, TrainResult]:
    """
    拟合 scaler、切分训练窗口并离线训练自编码器

    Args:
        train_raw: 原始训练数据
        config: 运行配置（window / stride_train / hidden / latent / epochs / batch_size / lr）
        seed: 初始化与乱序种子

    Returns:
        (Checkpoint, TrainResult)
    """
    scaler = fit_scaler(train_raw)
    train = apply_scaler(train_raw, scaler)
    windows, _ = window_array(train, config.window, config.stride_train)
    model = init_model(config.window, train.n_features, config.hidden, config.latent, seed)
    logger.info(
        f"[TRAIN] seed={seed}: {windows.shape[0]} 个窗口, "
        f"{model.parameter_count()} 个参数, {config.epochs} 轮"
    )
    result = train_offline(model, windows, config.epochs, config.batch_size, config.lr, seed)
    ckpt = Checkpoint(
        model=result.model,
        scaler=scaler,
        train_mean=train.values.mean(axis=0),
        train_scores=result.train_scores,
        feature_names=list(train.feature_names),
        stride_train=config.stride_train,
        train_values=train.values,
        extra={"epochs": config.epochs, "batch_size": config.batch_size, "lr": config.lr},
    )
    return ckpt, result


@dataclass
class VariantResult:
    """单个变体在一条测试流上的结果"""

    variant: str
    tau: float
    stream: StreamResult
    labels: Optional[np.ndarray]
    report: Optional[EvalReport]


def _stream_tau(
    spec: ThresholdSpec, ckpt: Checkpoint, config: RunConfig, use_detrend: bool, use_tta: bool
) -> float:
    if spec.kind == KIND_PERCENTILE:
        train_scores = reference_scores(
            ckpt, use_detrend, config.gamma, config.effective_stride_test
        )
        return resolve_threshold(spec, train_scores=train_scores)
    if not spec.needs_labels:
        return resolve_threshold(spec)
    if use_tta:
        raise ConfigError(
            f"阈值 {spec.label()} 依赖测试标签，无法在流式更新前确定，不能与 TTA 同时使用",
            config_key="threshold",
        )
    # 不做 TTA 时 τ 不影响分数，流结束后再按 oracle 重新阈值化
    return float("inf")


def run_variant(
    ckpt: Checkpoint,
    test_raw: TimeSeriesDataset,
    config: RunConfig,
    use_detrend: bool,
    use_tta: bool,
    spec: Optional[ThresholdSpec] = None,
) -> VariantResult:
    """
    用检查点在测试流上运行一个消融变体并评估

    Args:
        ckpt: 离线训练检查点（不会被修改）
        test_raw: 原始测试数据（可无标签）
        config: 运行配置（gamma / eta / threshold / window / stride_test）
        use_detrend: 是否去趋势 (DT)
        use_tta: 是否测试时更新 (TTA)
        spec: 阈值规格（默认解析 config.threshold）

    Returns:
        VariantResult；无标签时 report 为 None
    """
    if spec is None:
        spec = parse_threshold_spec(config.threshold)
    if spec.needs_labels and test_raw.labels is None:
        raise ConfigError(f"阈值 {spec.label()} 需要测试标签", config_key="threshold")

    adapt_cfg = AdaptationConfig(
        gamma=config.gamma,
        eta=config.eta,
        tau=_stream_tau(spec, ckpt, config, use_detrend, use_tta),
        w=config.window,
        use_detrend=use_detrend,
        use_tta=use_tta,
    )
    state = AdaptationState.from_checkpoint(ckpt, adapt_cfg)
    test = apply_scaler(test_raw, ckpt.scaler)
    stream = run_stream(state, test, config.effective_stride_test)

    labels = None if test.labels is None else test.labels[stream.timesteps]
    report: Optional[EvalReport] = None
    tau = adapt_cfg.tau
    if labels is not None:
        if spec.needs_labels:
            report = evaluate(stream.scores, labels, spec)
            tau = report.tau
            stream.preds = (stream.scores > tau).astype(np.int64)
        else:
            report = report_from_predictions(
                stream.scores, stream.preds, labels, tau, spec.label()
            )
        logger.info(
            f"[EVAL] {adapt_cfg.variant}: F1={report.f1:.4f} F1-PA={report.f1_pa:.4f} "
            f"AUROC={report.auroc} AUPRC={report.auprc}"
        )
    return VariantResult(
        variant=adapt_cfg.variant, tau=tau, stream=stream, labels=labels, report=report
    )


def _cell_metrics(result: VariantResult, shift_at: Optional[int]) -> dict[str, Any]:
    report = result.report
    if report is None:
        raise ConfigError("消融实验需要带标签的测试数据", config_key="test_path")
    out: dict[str, Any] = {
        "F1": report.f1,
        "F1-PA": report.f1_pa,
        "AUROC": report.auroc,
        "AUPRC": report.auprc,
        "tau": result.tau,
    }
    if shift_at is not None:
        start = int(np.searchsorted(result.stream.timesteps, shift_at))
        out["post_shift_fp"] = false_positives_after(result.stream.preds, result.labels, start)
    return out


def mean_std(values: list[Optional[float]]) -> Optional[dict[str, float]]:
    """均值 ± 样本标准差 (ddof=1)；单个值时标准差为 0，忽略 None"""
    present = np.asarray([v for v in values if v is not None], dtype=np.float64)
    if present.size == 0:
        return None
    std = float(present.std(ddof=1)) if present.size > 1 else 0.0
    return {"mean": float(present.mean()), "std": std}


@dataclass
class AblationResult:
    """消融网格结果：每个变体一行的汇总，以及每个 (变体, seed) 单元的明细

    sweep 为分位数扫描的逐点结果（未配置扫描时为空），每行对应一个 (变体, seed, p)。
    """

    seeds: list[int]
    rows: list[dict[str, Any]]
    cells: list[dict[str, Any]]
    sweep: list[dict[str, Any]] = field(default_factory=list)
    traces: dict[tuple[str, int], VariantResult] = field(default_factory=dict, repr=False)

    def row(self, variant: str) -> dict[str, Any]:
        for r in self.rows:
            if r["variant"] == variant:
                return r
        raise KeyError(variant)

    def to_dict(self) -> dict[str, Any]:
        return {"seeds": list(self.seeds), "rows": self.rows, "cells": self.cells}


def run_ablation(
    train_raw: TimeSeriesDataset,
    test_raw: TimeSeriesDataset,
    config: RunConfig,
    shift_at: Optional[int] = None,
    keep_traces: bool = False,
) -> AblationResult:
    """
    运行 {none, DT, TTA, DT+TTA} × seeds 网格

    每个 seed 训练一次，四个变体从同一检查点出发，各自持有独立状态。
    config.workers > 1 时用线程池并行，结果按 (变体, seed) 的固定顺序汇总。
    配置了 config.sweep 时，对扫描范围内的每个 p 用同一检查点重新运行每个变体。

    Args:
        train_raw: 原始训练数据
        test_raw: 带标签的原始测试数据
        config: 运行配置
        shift_at: 已知的漂移起点（用于统计漂移后的误报数）
        keep_traces: 是否保留每个单元的逐时间步轨迹

    Returns:
        AblationResult
    """
    seeds = list(config.seeds)
    percentiles = parse_percentile_sweep(config.sweep) if config.sweep else []
    logger.info(f"[ABLATE] 变体 {len(VARIANTS)} × seeds {seeds}, workers={config.workers}")

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        ckpts = list(pool.map(lambda s: train_detector(train_raw, config, s)[0], seeds))
        jobs = [
            (name, seed, pool.submit(run_variant, ckpt, test_raw, config, dt, tta))
            for name, dt, tta in VARIANTS
            for seed, ckpt in zip(seeds, ckpts)
        ]
        results = [(name, seed, job.result()) for name, seed, job in jobs]
        sweep_jobs = [
            (name, seed, p, pool.submit(
                run_variant, ckpt, test_raw, config, dt, tta,
                ThresholdSpec(kind=KIND_PERCENTILE, p=p),
            ))
            for name, dt, tta in VARIANTS
            for seed, ckpt in zip(seeds, ckpts)
            for p in percentiles
        ]
        swept = [(name, seed, p, job.result()) for name, seed, p, job in sweep_jobs]

    cells = []
    traces: dict[tuple[str, int], VariantResult] = {}
    for name, seed, result in results:
        cells.append({"variant": name, "seed": seed, **_cell_metrics(result, shift_at)})
        if keep_traces:
            traces[(name, seed)] = result

    sweep = []
    for name, seed, p, result in swept:
        cell = _cell_metrics(result, None)
        sweep.append({
            "variant": name, "seed": seed, "p": p, "tau": result.tau,
            "F1": cell["F1"], "F1-PA": cell["F1-PA"],
        })
    if percentiles:
        logger.info(f"[ABLATE] 分位数扫描: {len(percentiles)} 个 p, {len(sweep)} 个点")

    rows = []
    for name, _, _ in VARIANTS:
        mine = [c for c in cells if c["variant"] == name]
        row: dict[str, Any] = {"variant": name}
        for key in METRIC_KEYS:
            row[key] = mean_std([c[key] for c in mine])
        if shift_at is not None:
            row["post_shift_fp"] = mean_std([c["post_shift_fp"] for c in mine])
        rows.append(row)
        logger.info(f"[ABLATE] {name}: " + ", ".join(
            f"{k}={row[k]['mean']:.4f}" for k in METRIC_KEYS if row[k] is not None
        ))
    return AblationResult(seeds=seeds, rows=rows, cells=cells, sweep=sweep, traces=traces)
