"""子命令: train - 离线训练自编码器并写出检查点、训练分数与分位数阈值表"""

import argparse
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from ...core.adaptation import reference_scores
from ...core.checkpoint import save_checkpoint
from ...core.config import RunConfig
from ...core.data import load_csv
from ...core.exceptions import ConfigError
from ...core.experiment import train_detector
from ...core.report_serializer import write_frame
from ...core.threshold import threshold_table
from ..options import (
    add_checkpoint_option,
    add_common_options,
    add_data_options,
    add_model_options,
    add_training_options,
)

DEFAULT_CHECKPOINT = "model.ckpt"


def command_definition(subparsers: Any) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        "train",
        help="离线训练",
        description="""在训练 CSV 上训练 MLP 自编码器。

输出（--out 目录）:
- model.ckpt（或 --checkpoint 指定的路径）: 模型、scaler、趋势初值、训练分数
- train_scores.csv: 每个训练窗口每个位置的异常分数
- thresholds.csv: Q90 … Q100（步长 0.1）分位数阈值；tau 取离线训练分数，
  tau_dt 取训练序列按去趋势流重新评分后的分数（γ 与测试步长取配置值）

第一个种子用于初始化和乱序。""",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    add_common_options(parser)
    add_data_options(parser, train=True, test=False)
    add_checkpoint_option(parser, "检查点输出路径")
    add_model_options(parser)
    add_training_options(parser)
    return parser


def handle_train(config: RunConfig, args: argparse.Namespace) -> dict[str, Any]:
    """
    处理 train 命令

    Args:
        config: 合并后的运行配置
        args: 命令行解析结果

    Returns:
        运行摘要
    """
    if not config.train_path:
        raise ConfigError("train 需要 --train 指定训练 CSV", config_key="train_path")

    train_raw = load_csv(config.train_path, config.label_column, label_required=False)
    seed = config.seeds[0]
    ckpt, result = train_detector(train_raw, config, seed)

    out_dir = Path(config.out_dir)
    ckpt_path = save_checkpoint(ckpt, config.checkpoint_path or out_dir / DEFAULT_CHECKPOINT)

    n_windows, w = ckpt.train_scores.shape
    scores_path = write_frame(
        pd.DataFrame({
            "window": np.repeat(np.arange(n_windows), w),
            "offset": np.tile(np.arange(w), n_windows),
            "score": ckpt.train_scores.ravel(),
        }),
        out_dir / "train_scores.csv",
    )
    table = threshold_table(ckpt.train_scores)
    table_dt = threshold_table(
        reference_scores(ckpt, True, config.gamma, config.effective_stride_test)
    )
    thresholds_path = write_frame(
        pd.DataFrame({
            "p": [p for p, _ in table],
            "tau": [tau for _, tau in table],
            "tau_dt": [tau for _, tau in table_dt],
        }),
        out_dir / "thresholds.csv",
    )

    return {
        "command": "train",
        "seed": seed,
        "n_timesteps": train_raw.n_timesteps,
        "n_features": train_raw.n_features,
        "n_windows": int(n_windows),
        "parameters": ckpt.model.parameter_count(),
        "epochs": config.epochs,
        "final_loss": result.epoch_losses[-1] if result.epoch_losses else None,
        "q99": dict(table)[99.0],
        "q99_dt": dict(table_dt)[99.0],
        "checkpoint": str(ckpt_path),
        "train_scores": str(scores_path),
        "thresholds": str(thresholds_path),
    }
