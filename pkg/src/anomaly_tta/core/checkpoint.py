"""版本化二进制容器：模型检查点与适应状态快照共用

布局::

    b"ATTA" | 版本(1B) | 类型(1B) | 头长度(<u4) | JSON 头 | float64 小端数据 | CRC32(<u4)

JSON 头按键排序、紧凑编码，数组按名称顺序连续存放，因此同一内容总是得到
相同字节，写读往返逐位一致。
"""

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .data import Scaler
from .exceptions import CorruptSnapshotError, DatasetNotFoundError, SnapshotVersionError
from .logging_config import get_logger, get_metrics
from .model import AutoencoderDims, MlpAutoencoder

logger = get_logger(__name__)
metrics = get_metrics()

MAGIC = b"ATTA"
FORMAT_VERSION = 1
KIND_CHECKPOINT = 1
KIND_SNAPSHOT = 2

_PREFIX = struct.Struct("<4sBBI")
_CRC = struct.Struct("<I")


def pack_container(kind: int, meta: dict[str, Any], arrays: dict[str, np.ndarray]) -> bytes:
    """
    打包为容器字节

    Args:
        kind: KIND_CHECKPOINT 或 KIND_SNAPSHOT
        meta: 可 JSON 序列化的元数据
        arrays: 名称到数组的映射（统一存为 float64）

    Returns:
        容器字节
    """
    directory = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        data = np.ascontiguousarray(arrays[name], dtype="<f8")
        raw = data.tobytes()
        directory.append({"name": name, "shape": list(data.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"meta": meta, "arrays": directory}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    body = _PREFIX.pack(MAGIC, FORMAT_VERSION, kind, len(header)) + header + b"".join(chunks)
    return body + _CRC.pack(zlib.crc32(body))


def unpack_container(blob: bytes, expected_kind: int) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    """
    解析容器字节

    依次检查魔数、版本、校验和与类型。

    Raises:
        SnapshotVersionError: 版本不匹配
        CorruptSnapshotError: 魔数、长度、校验和或类型错误
    """
    if len(blob) < _PREFIX.size + _CRC.size:
        raise CorruptSnapshotError("容器长度不足")
    magic, version, kind, header_len = _PREFIX.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CorruptSnapshotError("容器魔数错误")
    if version != FORMAT_VERSION:
        raise SnapshotVersionError(found=version, expected=FORMAT_VERSION)
    body, (crc,) = blob[:-_CRC.size], _CRC.unpack_from(blob, len(blob) - _CRC.size)
    if zlib.crc32(body) != crc:
        raise CorruptSnapshotError("容器校验和不匹配")
    if kind != expected_kind:
        raise CorruptSnapshotError(
            f"容器类型不符: 期望 {expected_kind}, 实际 {kind}",
            details={"expected": expected_kind, "actual": kind},
        )

    start = _PREFIX.size
    try:
        header = json.loads(body[start:start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptSnapshotError(f"容器头无法解析: {e}") from e

    payload = body[start + header_len:]
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        begin, end = entry["offset"], entry["offset"] + 8 * count
        if end > len(payload):
            raise CorruptSnapshotError(f"数组 {entry['name']} 越界")
        arrays[entry["name"]] = (
            np.frombuffer(payload[begin:end], dtype="<f8").astype(np.float64).reshape(shape)
        )
    return header["meta"], arrays


def model_arrays(m: MlpAutoencoder) -> dict[str, np.ndarray]:
    out = {f"W{k}": w for k, w in enumerate(m.weights)}
    out.update({f"b{k}": b for k, b in enumerate(m.biases)})
    return out


def model_meta(m: MlpAutoencoder) -> dict[str, Any]:
    return {
        "dims": [m.dims.window, m.dims.n_features, m.dims.hidden, m.dims.latent],
        "seed": m.seed,
    }


def model_from(meta: dict[str, Any], arrays: dict[str, np.ndarray]) -> MlpAutoencoder:
    w, f, h, d = meta["dims"]
    dims = AutoencoderDims(window=w, n_features=f, hidden=h, latent=d)
    n_layers = len(dims.layer_sizes()) - 1
    try:
        weights = [arrays[f"W{k}"].copy() for k in range(n_layers)]
        biases = [arrays[f"b{k}"].copy() for k in range(n_layers)]
    except KeyError as e:
        raise CorruptSnapshotError(f"缺少参数数组: {e}") from e
    return MlpAutoencoder(dims=dims, weights=weights, biases=biases, seed=int(meta["seed"]))


@dataclass
class Checkpoint:
    """离线训练产物：模型 + 标准化参数 + 趋势初值 + 训练分数

    train_values 为标准化后的训练序列，用于在去趋势空间重新计算分位数阈值。
    """

    model: MlpAutoencoder
    scaler: Scaler
    train_mean: np.ndarray
    train_scores: np.ndarray
    feature_names: list[str]
    stride_train: int = 1
    train_values: Optional[np.ndarray] = None
    extra: dict[str, Any] = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        meta = {
            **model_meta(self.model),
            "feature_names": list(self.feature_names),
            "stride_train": self.stride_train,
            "extra": self.extra,
        }
        arrays = {
            **model_arrays(self.model),
            "scaler_mean": self.scaler.mean,
            "scaler_std": self.scaler.std,
            "train_mean": self.train_mean,
            "train_scores": self.train_scores,
        }
        if self.train_values is not None:
            arrays["train_values"] = self.train_values
        return pack_container(KIND_CHECKPOINT, meta, arrays)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Checkpoint":
        meta, arrays = unpack_container(blob, KIND_CHECKPOINT)
        return cls(
            model=model_from(meta, arrays),
            scaler=Scaler(mean=arrays["scaler_mean"], std=arrays["scaler_std"]),
            train_mean=arrays["train_mean"],
            train_scores=arrays["train_scores"],
            feature_names=list(meta["feature_names"]),
            stride_train=int(meta["stride_train"]),
            train_values=arrays.get("train_values"),
            extra=dict(meta.get("extra", {})),
        )


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    blob = ckpt.to_bytes()
    out.write_bytes(blob)
    metrics.log_file_io(str(out), len(blob), write=True)
    logger.info(f"[CKPT] 已保存检查点: {out} ({ckpt.model.parameter_count()} 个参数)")
    return out


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    src = Path(path)
    if not src.exists():
        raise DatasetNotFoundError(str(src))
    blob = src.read_bytes()
    metrics.log_file_io(str(src), len(blob))
    try:
        return Checkpoint.from_bytes(blob)
    except (CorruptSnapshotError, SnapshotVersionError) as e:
        e.details["file_path"] = str(src)
        raise
