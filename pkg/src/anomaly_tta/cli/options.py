"""子命令共用的命令行参数组与配置合并

所有参数默认值都是 None：未给出的参数不覆盖配置文件和内置默认值。
dest 与 RunConfig 字段同名，合并时直接作为覆盖项传入。
"""

import argparse
from pathlib import Path
from typing import Any, Optional

from ..core.config import RunConfig
from ..core.data import TimeSeriesDataset, generate_synthetic, load_csv
from ..core.logging_config import get_logger

logger = get_logger(__name__)

# 命令行覆盖项对应的 RunConfig 字段
OVERRIDE_KEYS = (
    "train_path", "test_path", "checkpoint_path", "out_dir", "label_column",
    "window", "stride_train", "stride_test", "hidden", "latent",
    "gamma", "eta", "threshold", "detrend", "adapt",
    "epochs", "batch_size", "lr", "seeds",
    "kld_bins", "sweep", "workers", "output_format",
    "synth_length_train", "synth_length_test", "synth_period", "synth_amplitude",
    "synth_shift_at", "synth_shift_magnitude", "synth_anomaly_count",
    "synth_anomaly_magnitude", "synth_noise_std", "synth_seed",
)


def add_common_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="扁平 TOML 配置文件路径")
    parser.add_argument("--out", dest="out_dir", help="输出目录")
    parser.add_argument(
        "--format", dest="output_format", choices=["json", "text"], help="标准输出格式"
    )
    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help="日志级别（覆盖 ATTA_LOG_LEVEL）",
    )


def add_data_options(parser: argparse.ArgumentParser, train: bool = True, test: bool = True) -> None:
    if train:
        parser.add_argument("--train", dest="train_path", help="训练 CSV")
    if test:
        parser.add_argument("--test", dest="test_path", help="测试 CSV（缺省时使用合成数据）")
    parser.add_argument("--label-column", dest="label_column", help="标签列名（默认 label）")


def add_checkpoint_option(parser: argparse.ArgumentParser, help_text: str) -> None:
    parser.add_argument("--checkpoint", dest="checkpoint_path", help=help_text)


def add_model_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("模型")
    group.add_argument("--window", type=int, help="窗口长度 w")
    group.add_argument("--stride-train", dest="stride_train", type=int, help="训练步长")
    group.add_argument("--hidden", type=int, help="隐藏层宽度 h")
    group.add_argument("--latent", type=int, help="潜变量维度 d")


def add_training_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("离线训练")
    group.add_argument("--epochs", type=int, help="训练轮数")
    group.add_argument("--batch", dest="batch_size", type=int, help="批大小")
    group.add_argument("--lr", type=float, help="Adam 学习率")
    seeds = group.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int, help="单个种子")
    seeds.add_argument("--seeds", type=int, nargs="+", help="种子列表")


def add_adaptation_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("测试时适应")
    group.add_argument("--stride-test", dest="stride_test", type=int, help="测试步长（默认 = w）")
    group.add_argument("--gamma", type=float, help="趋势 EMA 系数 γ")
    group.add_argument("--eta", type=float, help="在线 SGD 步长 η")
    group.add_argument(
        "--threshold", help="阈值规格: q99 | q99.9 | oracle | oracle-pa | fixed:X"
    )
    group.add_argument(
        "--detrend", action=argparse.BooleanOptionalAction, default=None, help="去趋势 (DT)"
    )
    group.add_argument(
        "--adapt", action=argparse.BooleanOptionalAction, default=None, help="测试时更新 (TTA)"
    )


def add_synthetic_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("合成数据")
    group.add_argument("--length-train", dest="synth_length_train", type=int)
    group.add_argument("--length-test", dest="synth_length_test", type=int)
    group.add_argument("--period", dest="synth_period", type=int)
    group.add_argument("--amplitude", dest="synth_amplitude", type=float)
    group.add_argument("--shift-at", dest="synth_shift_at", type=int)
    group.add_argument("--shift-magnitude", dest="synth_shift_magnitude", type=float)
    group.add_argument("--anomaly-count", dest="synth_anomaly_count", type=int)
    group.add_argument("--anomaly-magnitude", dest="synth_anomaly_magnitude", type=float)
    group.add_argument("--noise-std", dest="synth_noise_std", type=float)
    group.add_argument("--synth-seed", dest="synth_seed", type=int)


def config_overrides(args: argparse.Namespace) -> dict[str, Any]:
    """从解析结果中取出非 None 的覆盖项"""
    values = vars(args)
    overrides = {k: values[k] for k in OVERRIDE_KEYS if values.get(k) is not None}
    if values.get("seed") is not None:
        overrides["seeds"] = [values["seed"]]
    return overrides


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """
    合并配置：命令行 > 配置文件 > 默认值

    Raises:
        ConfigError: 配置文件无法读取或取值无效
    """
    config_path: Optional[str] = getattr(args, "config", None)
    config = RunConfig.load(Path(config_path) if config_path else None)
    config = config.with_overrides(**config_overrides(args))
    config.validate()
    return config


def load_test_source(config: RunConfig) -> tuple[TimeSeriesDataset, Optional[int]]:
    """
    读取测试数据；未指定 --test 时使用合成数据的测试段

    Returns:
        (测试集, 已知漂移起点或 None)
    """
    if config.test_path:
        return load_csv(config.test_path, config.label_column, label_required=False), None
    spec = config.synthetic_spec()
    logger.info(f"[CLI] 未指定 --test，使用合成数据 (seed={spec.seed})")
    return generate_synthetic(spec)[1], spec.shift_at
