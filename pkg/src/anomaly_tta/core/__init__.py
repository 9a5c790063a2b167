"""核心模块"""

from .logging_config import (
    get_logger,
    setup_logging,
    LoggerFactory,
    init_default_logging,
    get_metrics,
    log_metrics_summary,
    reset_metrics,
    MetricsLogger
)
from .config import (
    RunConfig,
    LoggingConfig,
    get_logging_config,
    reload_logging_config
)
from .data import (
    TimeSeriesDataset,
    Scaler,
    Window,
    SyntheticSpec,
    load_csv,
    write_csv,
    fit_scaler,
    apply_scaler,
    make_windows,
    window_array,
    generate_synthetic
)
from .trend import TrendEstimator, init_trend, update_trend, detrend, retrend
from .model import (
    MlpAutoencoder,
    init_model,
    forward,
    score,
    masked_loss,
    gradients,
    sgd_step,
    score_windows,
    train_offline
)
from .threshold import (
    ThresholdSpec,
    parse_threshold_spec,
    percentile_threshold,
    threshold_table,
    oracle_threshold,
    oracle_pa_threshold,
    resolve_threshold
)
from .metrics import (
    ConfusionCounts,
    EvalReport,
    confusion,
    prf1,
    point_adjust,
    auroc,
    auprc,
    kld_shift,
    evaluate
)
from .checkpoint import Checkpoint, save_checkpoint, load_checkpoint
from .adaptation import (
    AdaptationConfig,
    AdaptationState,
    StreamResult,
    process_window,
    run_stream,
    offline_scores,
    snapshot,
    restore
)
from .experiment import VARIANTS, train_detector, run_variant, run_ablation
from .report_serializer import serialize_result

__all__ = [
    'get_logger',
    'setup_logging',
    'LoggerFactory',
    'init_default_logging',
    'get_metrics',
    'log_metrics_summary',
    'reset_metrics',
    'MetricsLogger',
    'RunConfig',
    'LoggingConfig',
    'get_logging_config',
    'reload_logging_config',
    'TimeSeriesDataset',
    'Scaler',
    'Window',
    'SyntheticSpec',
    'load_csv',
    'write_csv',
    'fit_scaler',
    'apply_scaler',
    'make_windows',
    'window_array',
    'generate_synthetic',
    'TrendEstimator',
    'init_trend',
    'update_trend',
    'detrend',
    'retrend',
    'MlpAutoencoder',
    'init_model',
    'forward',
    'score',
    'masked_loss',
    'gradients',
    'sgd_step',
    'score_windows',
    'train_offline',
    'ThresholdSpec',
    'parse_threshold_spec',
    'percentile_threshold',
    'threshold_table',
    'oracle_threshold',
    'oracle_pa_threshold',
    'resolve_threshold',
    'ConfusionCounts',
    'EvalReport',
    'confusion',
    'prf1',
    'point_adjust',
    'auroc',
    'auprc',
    'kld_shift',
    'evaluate',
    'Checkpoint',
    'save_checkpoint',
    'load_checkpoint',
    'AdaptationConfig',
    'AdaptationState',
    'StreamResult',
    'process_window',
    'run_stream',
    'offline_scores',
    'snapshot',
    'restore',
    'VARIANTS',
    'train_detector',
    'run_variant',
    'run_ablation',
    'serialize_result'
]
