"""命令行主入口"""

import argparse
import json
import sys
import time
from typing import Any, Callable, Optional, Sequence

from ..core.config import RunConfig, get_logging_config
from ..core.exceptions import AnomalyTTAError, DivergenceError
from ..core.logging_config import get_logger, get_metrics, log_metrics_summary, setup_logging
from ..core.report_serializer import serialize_result
from .options import resolve_config

logger = get_logger(__name__)
metrics = get_metrics()

# 导入子命令定义和处理函数
from .commands.ablate import command_definition as ablate_command, handle_ablate
from .commands.detect import command_definition as detect_command, handle_detect
from .commands.evaluate import command_definition as evaluate_command, handle_evaluate
from .commands.synth import command_definition as synth_command, handle_synth
from .commands.train import command_definition as train_command, handle_train

EXIT_OK = 0
EXIT_DIVERGENCE = 1
EXIT_USAGE = 2

Handler = Callable[[RunConfig, argparse.Namespace], dict[str, Any]]

HANDLERS: dict[str, Handler] = {
    "train": handle_train,
    "detect": handle_detect,
    "evaluate": handle_evaluate,
    "ablate": handle_ablate,
    "synth": handle_synth,
}


def build_parser() -> argparse.ArgumentParser:
    """构建带全部子命令的参数解析器"""
    parser = argparse.ArgumentParser(
        prog="anomaly-tta",
        description="带趋势去除与测试时适应的时间序列异常检测",
    )
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for definition in (train_command, detect_command, evaluate_command, ablate_command,
                       synth_command):
        definition(subparsers)
    return parser


def run_command(name: str, config: RunConfig, args: argparse.Namespace) -> dict[str, Any]:
    """
    执行子命令并记录耗时

    Args:
        name: 子命令名称
        config: 合并后的运行配置
        args: 命令行解析结果

    Returns:
        子命令的结果摘要
    """
    start_time = time.time()

    args_str = json.dumps(config.to_dict(), ensure_ascii=False, default=str)
    args_preview = args_str[:300] + "..." if len(args_str) > 300 else args_str
    logger.info(f"[CLI] 命令: {name} | 配置: {args_preview}")

    handler = HANDLERS.get(name)
    if handler is None:
        raise AnomalyTTAError(f"未知命令: {name}")

    success = False
    try:
        result = handler(config, args)
        success = True
        return result
    finally:
        duration_ms = (time.time() - start_time) * 1000
        metrics.log_command_call(
            command=name,
            args=vars(args),
            duration_ms=duration_ms,
            success=success
        )
        logger.info(f"[CLI] 命令: {name} | 成功: {success} | 耗时: {duration_ms:.0f}ms")


def _configure_logging(level: Optional[str]) -> None:
    log_config = get_logging_config()
    setup_logging(
        log_level=level or log_config.level,
        log_dir=log_config.dir,
        log_to_file=log_config.to_file,
        log_to_console=log_config.console,
    )


def _report_error(error: Exception) -> None:
    if isinstance(error, AnomalyTTAError):
        payload = {"success": False, **error.to_dict()}
    else:
        payload = {"success": False, "error": str(error), "error_type": type(error).__name__}
    print(serialize_result(payload), file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    命令行入口

    Args:
        argv: 参数列表（默认取 sys.argv[1:]）

    Returns:
        退出码: 0 成功, 1 计算发散（非有限值）, 2 用法 / 输入输出错误
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    try:
        _configure_logging(args.log_level)
        config = resolve_config(args)
        result = run_command(args.command, config, args)
    except DivergenceError as e:
        logger.error(f"[CLI] 计算发散: {e}")
        _report_error(e)
        return EXIT_DIVERGENCE
    except (AnomalyTTAError, OSError) as e:
        logger.error(f"[CLI] {type(e).__name__}: {e}")
        _report_error(e)
        return EXIT_USAGE

    print(serialize_result(result, config.output_format))
    log_metrics_summary()
    return EXIT_OK
