"""子命令: synth - 生成合成趋势漂移数据"""

import argparse
from pathlib import Path
from typing import Any

from ...core.config import RunConfig
from ...core.data import generate_synthetic, write_csv
from ..options import add_common_options, add_synthetic_options


def command_definition(subparsers: Any) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        "synth",
        help="生成合成数据",
        description="""生成正弦 + 水平漂移 + 点异常的单变量序列。

输出（--out 目录）: train.csv（无标签）, test.csv（含标签列）
同一 --synth-seed 总是得到相同文件。""",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    add_common_options(parser)
    add_synthetic_options(parser)
    parser.add_argument("--label-column", dest="label_column", help="标签列名（默认 label）")
    return parser


def handle_synth(config: RunConfig, args: argparse.Namespace) -> dict[str, Any]:
    spec = config.synthetic_spec()
    train, test = generate_synthetic(spec)
    out_dir = Path(config.out_dir)
    train_path = write_csv(train, out_dir / "train.csv", config.label_column)
    test_path = write_csv(test, out_dir / "test.csv", config.label_column)
    return {
        "command": "synth",
        "seed": spec.seed,
        "length_train": train.n_timesteps,
        "length_test": test.n_timesteps,
        "shift_at": spec.shift_at,
        "anomalies": int(test.labels.sum()) if test.labels is not None else 0,
        "train": str(train_path),
        "test": str(test_path),
    }
