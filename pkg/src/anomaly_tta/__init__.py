"""anomaly-tta: 带趋势去除与测试时适应的时间序列异常检测"""

__version__ = "0.1.0"


def main() -> None:
    """主入口函数"""
    import sys
    from .cli.main import main as cli_main

    sys.exit(cli_main())
