"""结果序列化：JSON / 对齐文本表，以及逐时间步轨迹 CSV

JSON 按插入顺序输出，同一结果总是得到相同文本。
"""

import json
import math
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import pandas as pd

from .adaptation import StreamResult
from .logging_config import get_logger, get_metrics

logger = get_logger(__name__)
metrics = get_metrics()

ABLATION_COLUMNS = ("F1", "F1-PA", "AUROC", "AUPRC")
SCHEMA_DIR = Path(__file__).resolve().parent.parent / "schemas"


def load_schema(name: str) -> dict[str, Any]:
    """读取随包发布的 JSON Schema（eval_report / detect_summary / ablation）"""
    with open(SCHEMA_DIR / f"{name}.schema.json", encoding="utf-8") as f:
        return json.load(f)


def _jsonable(value: Any) -> Any:
    """numpy 标量与非有限浮点数转为 JSON 可表示的值"""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    return value


def to_json(data: Any) -> str:
    return json.dumps(_jsonable(data), ensure_ascii=False, indent=2)


def _format_cell(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, dict) and "mean" in value:
        return f"{value['mean']:.4f} ± {value['std']:.4f}"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def format_table(rows: list[dict[str, Any]], columns: Optional[list[str]] = None) -> str:
    """
    把字典行渲染为左对齐的文本表

    Args:
        rows: 行数据
        columns: 列顺序（默认取所有行中出现的键，按首次出现顺序）

    Returns:
        表格文本，首行为表头，第二行为分隔线
    """
    if columns is None:
        columns = []
        for row in rows:
            columns.extend(k for k in row if k not in columns)
    cells = [[_format_cell(row.get(c)) for c in columns] for row in rows]
    widths = [max([len(c)] + [len(r[k]) for r in cells]) for k, c in enumerate(columns)]
    lines = [
        "  ".join(c.ljust(widths[k]) for k, c in enumerate(columns)).rstrip(),
        "  ".join("-" * widths[k] for k in range(len(columns))),
    ]
    lines.extend("  ".join(v.ljust(widths[k]) for k, v in enumerate(r)).rstrip() for r in cells)
    return "\n".join(lines)


def format_ablation_table(rows: list[dict[str, Any]]) -> str:
    """消融结果表：每个变体一行，指标列为 mean ± std"""
    columns = ["variant", *ABLATION_COLUMNS]
    if any("post_shift_fp" in r for r in rows):
        columns.append("post_shift_fp")
    return format_table(rows, columns)


def _format_text(data: Any) -> str:
    if isinstance(data, dict):
        if "rows" in data and isinstance(data["rows"], list):
            return format_ablation_table(data["rows"])
        width = max((len(str(k)) for k in data), default=0)
        lines = []
        for key, value in data.items():
            if isinstance(value, (dict, list)):
                value = json.dumps(_jsonable(value), ensure_ascii=False)
            lines.append(f"{str(key).ljust(width)}  {_format_cell(value)}")
        return "\n".join(lines)
    if isinstance(data, list) and data and all(isinstance(r, dict) for r in data):
        return format_table(data)
    return str(data)


def serialize_result(data: Any, format_type: str = "json") -> str:
    """
    序列化结果数据为指定格式

    Args:
        data: 要序列化的数据
        format_type: "json" 或 "text"

    Returns:
        序列化后的字符串
    """
    if format_type == "text":
        return _format_text(_jsonable(data))
    return to_json(data)


def write_text(text: str, path: Union[str, Path]) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    data = (text + "\n").encode("utf-8")
    out.write_bytes(data)
    metrics.log_file_io(str(out), len(data), write=True)
    return out


def stream_frame(
    stream: StreamResult,
    feature_names: list[str],
    labels: Optional[np.ndarray] = None,
) -> pd.DataFrame:
    """逐时间步轨迹表：timestep, score, prediction, [label], mu_<特征>"""
    frame = pd.DataFrame({
        "timestep": stream.timesteps.astype(np.int64),
        "score": stream.scores,
        "prediction": stream.preds.astype(np.int64),
    })
    if labels is not None:
        frame["label"] = np.asarray(labels, dtype=np.int64)
    for j, name in enumerate(feature_names):
        frame[f"mu_{name}"] = stream.mu[:, j]
    return frame


def trend_frame(stream: StreamResult, feature_names: list[str]) -> pd.DataFrame:
    """逐窗口趋势轨迹表：window_end, mu_<特征>"""
    frame = pd.DataFrame({"window_end": stream.window_ends.astype(np.int64)})
    for j, name in enumerate(feature_names):
        frame[f"mu_{name}"] = stream.mu_trace[:, j]
    return frame


def write_frame(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """写出 CSV（浮点数按最短往返表示）"""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out, index=False, lineterminator="\n", encoding="utf-8")
    metrics.log_file_io(str(out), out.stat().st_size, write=True)
    logger.debug(f"[OUTPUT] 已写出 {out} ({len(frame)} 行)")
    return out
