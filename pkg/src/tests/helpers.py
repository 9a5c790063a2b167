"""测试辅助函数"""

import numpy as np

from anomaly_tta.core.data import TimeSeriesDataset, Window


def random_window(rng, w, f, end_index=None):
    return Window(data=rng.normal(size=(w, f)), end_index=w - 1 if end_index is None else end_index)


def dataset(values, labels=None):
    return TimeSeriesDataset(values=np.asarray(values, dtype=np.float64), labels=labels)
