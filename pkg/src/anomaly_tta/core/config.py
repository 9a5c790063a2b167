"""配置管理模块 - 读取和管理 anomaly-tta 运行配置

支持的配置来源（优先级从高到低）：
1. 命令行参数
2. 配置文件（--config 指定，或当前目录下的 .anomaly-tta.toml）
3. 默认值

日志配置单独从环境变量 (ATTA_LOG_*) 读取。

配置文件为扁平 TOML 键值对，示例 (.anomaly-tta.toml):
    window = 5
    latent = 2
    hidden = 4
    gamma = 0.9
    eta = 0.005
    threshold = "q99"
    seeds = [0, 1, 2, 3, 4]
    detrend = true
    adapt = true
    synth_shift_magnitude = 5.0
"""

import os
from dataclasses import dataclass, field, fields, replace, asdict
from pathlib import Path
from typing import Optional, Any

import tomli

from .data import SyntheticSpec
from .exceptions import ConfigError
from .threshold import parse_percentile_sweep, parse_threshold_spec

PROJECT_CONFIG_NAME = ".anomaly-tta.toml"


def _find_config_file() -> Optional[Path]:
    """查找项目配置文件

    Returns:
        找到的配置文件路径，如果没有找到则返回 None
    """
    project_config = Path.cwd() / PROJECT_CONFIG_NAME
    if project_config.exists():
        return project_config
    return None


def _load_toml_config(config_path: Path) -> dict:
    """加载 TOML 配置文件

    Args:
        config_path: 配置文件路径

    Returns:
        配置字典

    Raises:
        ConfigError: 文件不存在或语法错误
    """
    if not config_path.exists():
        raise ConfigError(f"配置文件不存在: {config_path}", details={"path": str(config_path)})
    try:
        with open(config_path, "rb") as f:
            return tomli.load(f)
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"配置文件解析失败: {config_path}: {e}") from e


@dataclass
class LoggingConfig:
    """日志配置"""

    # 日志级别
    level: str = field(
        default_factory=lambda: os.environ.get("ATTA_LOG_LEVEL", "INFO")
    )

    # 日志文件目录
    dir: str = field(
        default_factory=lambda: os.environ.get("ATTA_LOG_DIR", "logs")
    )

    # 是否写日志文件
    to_file: bool = field(
        default_factory=lambda: os.environ.get("ATTA_LOG_FILE_ENABLE", "false").lower() == "true"
    )

    # 是否输出到控制台
    console: bool = field(
        default_factory=lambda: os.environ.get("ATTA_LOG_CONSOLE", "true").lower() == "true"
    )

    def validate(self) -> None:
        valid_log_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if self.level.upper() not in valid_log_levels:
            raise ConfigError(
                f"无效的日志级别: {self.level}. 支持的级别: {', '.join(valid_log_levels)}",
                config_key="log_level"
            )


@dataclass
class RunConfig:
    """一次训练 / 检测 / 消融运行的完整配置

    所有字段都有默认值；None 表示未设置（写文件时省略）。
    stride_test 为 None 时取 window，即非重叠测试窗口。
    """

    # 路径
    train_path: Optional[str] = None
    test_path: Optional[str] = None
    checkpoint_path: Optional[str] = None
    out_dir: str = "out"
    label_column: str = "label"

    # 窗口
    window: int = 5
    stride_train: int = 1
    stride_test: Optional[int] = None

    # 模型
    hidden: int = 4
    latent: int = 2

    # 测试时适应
    gamma: float = 0.9
    eta: float = 0.005
    threshold: str = "q99"
    detrend: bool = True
    adapt: bool = True

    # 离线训练
    epochs: int = 50
    batch_size: int = 64
    lr: float = 0.005
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])

    # 评估与执行
    kld_bins: int = 50
    sweep: Optional[str] = None
    workers: int = 1
    output_format: str = "json"

    # 合成数据
    synth_length_train: int = 2000
    synth_length_test: int = 2000
    synth_period: int = 50
    synth_amplitude: float = 1.0
    synth_shift_at: int = 1000
    synth_shift_magnitude: float = 5.0
    synth_anomaly_count: int = 10
    synth_anomaly_magnitude: float = 3.0
    synth_noise_std: float = 0.05
    synth_seed: int = 7

    @classmethod
    def load(cls, config_path: Optional[Path] = None) -> "RunConfig":
        """从配置文件加载（未指定时查找项目配置文件）

        Args:
            config_path: 配置文件路径

        Returns:
            RunConfig 实例
        """
        path = Path(config_path) if config_path else _find_config_file()
        if path is None:
            return cls()
        return cls.from_dict(_load_toml_config(path))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        """从扁平字典构建配置，并按字段类型规范化数值

        Raises:
            ConfigError: 出现未知键或类型不符
        """
        known = {f.name: f for f in fields(cls)}
        values: dict[str, Any] = {}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(f"未知配置项: {key}", config_key=key)
            values[key] = _coerce(key, known[key].type, value)
        return cls(**values)

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """应用命令行覆盖，值为 None 的项保持不变"""
        known = {f.name: f for f in fields(self)}
        changes = {}
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in known:
                raise ConfigError(f"未知配置项: {key}", config_key=key)
            changes[key] = _coerce(key, known[key].type, value)
        return replace(self, **changes)

    @property
    def effective_stride_test(self) -> int:
        return self.stride_test if self.stride_test is not None else self.window

    def synthetic_spec(self) -> SyntheticSpec:
        """由 synth_* 字段构造合成数据规格"""
        return SyntheticSpec(
            length_train=self.synth_length_train,
            length_test=self.synth_length_test,
            period=self.synth_period,
            amplitude=self.synth_amplitude,
            shift_at=self.synth_shift_at,
            shift_magnitude=self.synth_shift_magnitude,
            anomaly_count=self.synth_anomaly_count,
            anomaly_magnitude=self.synth_anomaly_magnitude,
            noise_std=self.synth_noise_std,
            seed=self.synth_seed,
        )

    def validate(self) -> None:
        """验证配置有效性

        Raises:
            ConfigError: 配置无效时抛出
        """
        for key in ("window", "stride_train", "hidden", "latent", "batch_size",
                    "kld_bins", "workers"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} 必须 ≥ 1: {getattr(self, key)}", config_key=key)
        if self.kld_bins < 2:
            raise ConfigError(f"kld_bins 必须 ≥ 2: {self.kld_bins}", config_key="kld_bins")
        if self.stride_test is not None and self.stride_test < 1:
            raise ConfigError(f"stride_test 必须 ≥ 1: {self.stride_test}", config_key="stride_test")
        if self.epochs < 0:
            raise ConfigError(f"epochs 不能为负: {self.epochs}", config_key="epochs")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma 必须在 [0,1] 内: {self.gamma}", config_key="gamma")
        if self.eta < 0.0:
            raise ConfigError(f"eta 不能为负: {self.eta}", config_key="eta")
        if self.lr <= 0.0:
            raise ConfigError(f"lr 必须为正: {self.lr}", config_key="lr")
        if not self.seeds:
            raise ConfigError("seeds 不能为空", config_key="seeds")
        if self.output_format not in ("json", "text"):
            raise ConfigError(
                f"无效的 output_format: {self.output_format}. 支持的格式: json, text",
                config_key="output_format"
            )
        try:
            parse_threshold_spec(self.threshold)
        except Exception as e:
            raise ConfigError(str(e), config_key="threshold") from e
        if self.sweep is not None:
            try:
                parse_percentile_sweep(self.sweep)
            except Exception as e:
                raise ConfigError(str(e), config_key="sweep") from e
        try:
            self.synthetic_spec().validate()
        except Exception as e:
            raise ConfigError(f"合成数据规格无效: {e}", config_key="synth") from e

    def to_dict(self) -> dict[str, Any]:
        """将配置转换为扁平字典（省略 None 值）"""
        return {k: v for k, v in asdict(self).items() if v is not None}

    def save_to_file(self, path: Path) -> None:
        """保存配置到 TOML 文件

        Args:
            path: 保存路径
        """
        import tomli_w

        with open(path, "wb") as f:
            tomli_w.dump(self.to_dict(), f)


def _coerce(key: str, annotation: Any, value: Any) -> Any:
    """按字段类型注解规范化配置值"""
    text = str(annotation)
    try:
        if "list[int]" in text:
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split() if v]
            return [int(v) for v in value]
        if "bool" in text:
            if isinstance(value, str):
                if value.lower() not in ("true", "false"):
                    raise ValueError(value)
                return value.lower() == "true"
            if not isinstance(value, bool):
                raise ValueError(value)
            return value
        if "int" in text:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(value)
            return int(value)
        if "float" in text:
            if isinstance(value, bool):
                raise ValueError(value)
            return float(value)
        return str(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"配置项 {key} 的值无效: {value!r}", config_key=key) from e


# 全局日志配置实例
_logging_config: Optional[LoggingConfig] = None


def get_logging_config() -> LoggingConfig:
    """获取日志配置（首次调用时从环境变量加载）"""
    global _logging_config
    if _logging_config is None:
        _logging_config = LoggingConfig()
        _logging_config.validate()
    return _logging_config


def reload_logging_config() -> LoggingConfig:
    """重新从环境变量加载日志配置"""
    global _logging_config
    _logging_config = LoggingConfig()
    _logging_config.validate()
    return _logging_config
