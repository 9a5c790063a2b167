"""共享测试夹具"""

import logging

import numpy as np
import pytest

from anomaly_tta.core.config import RunConfig
from anomaly_tta.core.data import SyntheticSpec, generate_synthetic
from anomaly_tta.core.experiment import train_detector
from anomaly_tta.core.logging_config import reset_metrics
from anomaly_tta.core.model import init_model

SMALL_SYNTH = dict(
    synth_length_train=300,
    synth_length_test=300,
    synth_period=20,
    synth_shift_at=150,
    synth_anomaly_count=4,
)


@pytest.fixture(autouse=True)
def _reset_metrics():
    reset_metrics()
    yield


@pytest.fixture(autouse=True)
def _restore_root_logger():
    """命令行入口会重建根日志处理器，测试结束后恢复"""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config(tmp_path):
    """小规模配置：短序列、少量训练轮数、单个种子"""
    return RunConfig(
        out_dir=str(tmp_path / "out"),
        epochs=5,
        batch_size=32,
        seeds=[0],
        **SMALL_SYNTH,
    )


@pytest.fixture
def small_pair(small_config):
    return generate_synthetic(small_config.synthetic_spec())


@pytest.fixture
def small_checkpoint(small_config, small_pair):
    ckpt, _ = train_detector(small_pair[0], small_config, seed=0)
    return ckpt


@pytest.fixture
def default_pair():
    return generate_synthetic(SyntheticSpec())


@pytest.fixture
def tiny_model():
    """w=4, F=2, h=3, d=2 的小模型"""
    return init_model(4, 2, 3, 2, seed=3)
