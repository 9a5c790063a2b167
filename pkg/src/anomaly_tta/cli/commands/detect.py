"""子命令: detect - 在测试流上运行检测（可选去趋势与测试时更新）"""

import argparse
from pathlib import Path
from typing import Any

from ...core.checkpoint import load_checkpoint
from ...core.config import RunConfig
from ...core.data import load_csv
from ...core.experiment import run_variant
from ...core.metrics import kld_shift
from ...core.report_serializer import stream_frame, to_json, trend_frame, write_frame, write_text
from ..options import (
    add_adaptation_options,
    add_checkpoint_option,
    add_common_options,
    add_data_options,
    load_test_source,
)
from .train import DEFAULT_CHECKPOINT

SCORES_FILE = "scores.csv"
TREND_FILE = "trend.csv"
SUMMARY_FILE = "summary.json"


def command_definition(subparsers: Any) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        "detect",
        help="流式检测",
        description="""用检查点逐窗口处理测试流。

--detrend/--no-detrend 与 --adapt/--no-adapt 选择四个消融变体: none, DT, TTA, DT+TTA。

输出（--out 目录）:
- scores.csv: timestep, score, prediction, label（有标签时）, mu_<特征>
- trend.csv: 每个窗口处理后的趋势估计
- summary.json: 变体、阈值、流计数、评估报告；给出 --train 时附带 KLD 漂移诊断""",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    add_common_options(parser)
    add_data_options(parser, train=True, test=True)
    add_checkpoint_option(parser, "检查点路径（默认 <out>/model.ckpt）")
    parser.add_argument("--window", type=int, help="窗口长度（默认取检查点中的值）")
    add_adaptation_options(parser)
    parser.add_argument("--kld-bins", dest="kld_bins", type=int, help="KLD 直方图分箱数")
    return parser


def handle_detect(config: RunConfig, args: argparse.Namespace) -> dict[str, Any]:
    """
    处理 detect 命令

    Args:
        config: 合并后的运行配置
        args: 命令行解析结果

    Returns:
        运行摘要（同时写入 summary.json）
    """
    out_dir = Path(config.out_dir)
    ckpt = load_checkpoint(config.checkpoint_path or out_dir / DEFAULT_CHECKPOINT)
    if getattr(args, "window", None) is None:
        config = config.with_overrides(window=ckpt.model.dims.window)

    test_raw, _ = load_test_source(config)
    result = run_variant(ckpt, test_raw, config, config.detrend, config.adapt)
    stream = result.stream

    scores_path = write_frame(
        stream_frame(stream, ckpt.feature_names, result.labels), out_dir / SCORES_FILE
    )
    trend_path = write_frame(trend_frame(stream, ckpt.feature_names), out_dir / TREND_FILE)

    summary: dict[str, Any] = {
        "command": "detect",
        "variant": result.variant,
        "threshold": config.threshold,
        "tau": result.tau,
        "window": config.window,
        "stride_test": config.effective_stride_test,
        "gamma": config.gamma,
        "eta": config.eta,
        "n_timesteps": len(stream),
        "n_anomalies": int(stream.preds.sum()),
        **stream.extra,
        "report": None if result.report is None else result.report.to_dict(),
        "files": {"scores": str(scores_path), "trend": str(trend_path)},
    }
    if config.train_path:
        train_raw = load_csv(config.train_path, config.label_column, label_required=False)
        kld = kld_shift(train_raw, test_raw, bins=config.kld_bins)
        summary["kld"] = {
            "per_feature": dict(zip(ckpt.feature_names, kld.per_feature)),
            "total": kld.total,
            "bins": config.kld_bins,
        }

    write_text(to_json(summary), out_dir / SUMMARY_FILE)
    return summary
