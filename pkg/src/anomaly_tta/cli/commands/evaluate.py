"""子命令: evaluate - 对分数文件按阈值规格重新评估"""

import argparse
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd

from ...core.adaptation import reference_scores
from ...core.checkpoint import load_checkpoint
from ...core.config import RunConfig
from ...core.data import read_csv_file
from ...core.exceptions import (
    CellParseError,
    ConfigError,
    DataError,
    LabelError,
    ShapeMismatchError,
)
from ...core.logging_config import get_logger
from ...core.metrics import evaluate
from ...core.report_serializer import to_json, write_text
from ...core.threshold import KIND_PERCENTILE, parse_threshold_spec
from ..options import add_checkpoint_option, add_common_options

logger = get_logger(__name__)

REPORT_FILE = "eval_report.json"


def command_definition(subparsers: Any) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        "evaluate",
        help="重新评估分数文件",
        description="""读取分数 CSV（需含 score 列，可含 timestep 与标签列）并生成评估报告。

标签来源: --labels 指定的 CSV，否则取分数文件中的标签列。
分数文件含 timestep 列且标签文件覆盖完整序列时按 timestep 对齐。
qP 阈值需要 --checkpoint 提供训练分数；oracle / oracle-pa / fixed:X 不需要。
去趋势变体（默认）的 qP 阈值在检查点的训练序列上按 --gamma / --stride-test 重新计算，
与 detect 使用同一组参数时阈值一致；--no-detrend 时直接使用离线训练分数。

输出: <out>/eval_report.json""",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    add_common_options(parser)
    parser.add_argument("--scores", required=True, help="分数 CSV（detect 的 scores.csv 格式）")
    parser.add_argument("--labels", help="标签 CSV")
    parser.add_argument("--label-column", dest="label_column", help="标签列名（默认 label）")
    parser.add_argument(
        "--threshold", help="阈值规格: q99 | q99.9 | oracle | oracle-pa | fixed:X"
    )
    add_checkpoint_option(parser, "检查点路径（qP 阈值需要）")
    parser.add_argument(
        "--detrend", action=argparse.BooleanOptionalAction, default=None,
        help="分数来自去趋势变体（决定 qP 使用哪组训练分数）",
    )
    parser.add_argument("--gamma", type=float, help="趋势 EMA 系数 γ")
    parser.add_argument(
        "--stride-test", dest="stride_test", type=int, help="测试步长（默认 = 检查点窗口长度）"
    )
    return parser


def _read_scores(path: Path) -> pd.DataFrame:
    frame = read_csv_file(path, float_precision="round_trip")
    if "score" not in frame.columns:
        raise DataError(f"分数文件缺少 score 列: {path}", column="score")
    for name in ("score", "timestep"):
        if name not in frame.columns:
            continue
        parsed = pd.to_numeric(frame[name], errors="coerce")
        bad = parsed.isna().to_numpy()
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise CellParseError(str(path), row=row + 2, column=name, value=frame[name].iloc[row])
        frame[name] = parsed
    return frame


def _read_labels(path: Path, column: str) -> np.ndarray:
    """只读取标签列，其他列忽略"""
    frame = read_csv_file(path, dtype=str, keep_default_na=False)
    if column not in frame.columns:
        raise LabelError(f"标签列不存在: {column}", column=column)
    raw = frame[column]
    if not raw.isin(["0", "1"]).all():
        raise LabelError("标签取值不在 {0,1}", column=column)
    return raw.astype(np.int64).to_numpy()


def _align_labels(
    labels: np.ndarray, n_scores: int, timesteps: Optional[np.ndarray]
) -> np.ndarray:
    if labels.shape[0] == n_scores:
        return labels
    if timesteps is not None and timesteps.size and labels.shape[0] > int(timesteps.max()):
        return labels[timesteps]
    raise ShapeMismatchError("标签长度", n_scores, labels.shape[0])


def handle_evaluate(config: RunConfig, args: argparse.Namespace) -> dict[str, Any]:
    """
    处理 evaluate 命令

    Args:
        config: 合并后的运行配置
        args: 命令行解析结果（--scores / --labels）

    Returns:
        EvalReport 的扁平字典（同时写入 eval_report.json）
    """
    frame = _read_scores(Path(args.scores))
    scores = frame["score"].to_numpy(dtype=np.float64)
    timesteps = frame["timestep"].to_numpy(dtype=np.int64) if "timestep" in frame else None

    if args.labels:
        labels = _read_labels(Path(args.labels), config.label_column)
    elif config.label_column in frame.columns:
        labels = frame[config.label_column].to_numpy()
    elif "label" in frame.columns:
        labels = frame["label"].to_numpy()
    else:
        raise ConfigError(
            f"没有标签来源: 请用 --labels 指定，或在分数文件中提供 {config.label_column} 列",
            config_key="labels",
        )
    labels = _align_labels(np.asarray(labels), scores.shape[0], timesteps)

    spec = parse_threshold_spec(config.threshold)
    train_scores = None
    if spec.kind == KIND_PERCENTILE:
        if not config.checkpoint_path:
            raise ConfigError(
                f"阈值 {spec.label()} 需要 --checkpoint 提供训练分数", config_key="checkpoint_path"
            )
        ckpt = load_checkpoint(config.checkpoint_path)
        stride = config.stride_test if config.stride_test is not None else ckpt.model.dims.window
        train_scores = reference_scores(ckpt, config.detrend, config.gamma, stride)

    report = evaluate(scores, labels, spec, train_scores=train_scores)
    result = report.to_dict()
    write_text(to_json(result), Path(config.out_dir) / REPORT_FILE)
    logger.info(f"[EVAL] {spec.label()}: tau={report.tau}, F1={report.f1:.4f}")
    return result
