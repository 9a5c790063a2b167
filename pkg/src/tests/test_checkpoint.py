"""检查点容器测试"""

import numpy as np
import pytest

from anomaly_tta.core.checkpoint import (
    KIND_CHECKPOINT,
    MAGIC,
    Checkpoint,
    load_checkpoint,
    pack_container,
    save_checkpoint,
    unpack_container,
)
from anomaly_tta.core.exceptions import (
    CorruptSnapshotError,
    DatasetNotFoundError,
    SnapshotVersionError,
)
from anomaly_tta.core.experiment import train_detector
from anomaly_tta.core.model import init_model


class TestContainer:
    """二进制容器布局"""

    def test_layout(self):
        blob = pack_container(KIND_CHECKPOINT, {"a": 1}, {"x": np.arange(3.0)})
        assert blob[:4] == MAGIC
        assert blob[4] == 1
        assert blob[5] == KIND_CHECKPOINT
        meta, arrays = unpack_container(blob, KIND_CHECKPOINT)
        assert meta == {"a": 1}
        assert arrays["x"].tolist() == [0.0, 1.0, 2.0]

    def test_key_order_does_not_matter(self):
        a = pack_container(KIND_CHECKPOINT, {"a": 1, "b": 2}, {"x": np.ones(2), "y": np.zeros(1)})
        b = pack_container(KIND_CHECKPOINT, {"b": 2, "a": 1}, {"y": np.zeros(1), "x": np.ones(2)})
        assert a == b

    def test_scalar_and_empty_arrays(self):
        blob = pack_container(KIND_CHECKPOINT, {}, {"s": np.float64(2.5), "e": np.zeros((0, 3))})
        _, arrays = unpack_container(blob, KIND_CHECKPOINT)
        assert arrays["s"].shape == ()
        assert float(arrays["s"]) == 2.5
        assert arrays["e"].shape == (0, 3)

    def test_truncated(self):
        with pytest.raises(CorruptSnapshotError):
            unpack_container(b"ATTA", KIND_CHECKPOINT)

    def test_bad_magic(self):
        blob = bytearray(pack_container(KIND_CHECKPOINT, {}, {}))
        blob[0:4] = b"XXXX"
        with pytest.raises(CorruptSnapshotError):
            unpack_container(bytes(blob), KIND_CHECKPOINT)


class TestCheckpoint:
    """模型检查点"""

    def test_byte_determinism(self, small_config, small_pair):
        a, _ = train_detector(small_pair[0], small_config, seed=0)
        b, _ = train_detector(small_pair[0], small_config, seed=0)
        assert a.to_bytes() == b.to_bytes()

    def test_different_seed_differs(self, small_config, small_pair, small_checkpoint):
        other, _ = train_detector(small_pair[0], small_config, seed=1)
        assert other.to_bytes() != small_checkpoint.to_bytes()

    def test_file_round_trip(self, small_checkpoint, tmp_path):
        path = save_checkpoint(small_checkpoint, tmp_path / "ckpt" / "model.ckpt")
        back = load_checkpoint(path)
        assert back.model.params_equal(small_checkpoint.model)
        assert np.array_equal(back.train_scores, small_checkpoint.train_scores)
        assert np.array_equal(back.scaler.mean, small_checkpoint.scaler.mean)
        assert np.array_equal(back.scaler.std, small_checkpoint.scaler.std)
        assert np.array_equal(back.train_mean, small_checkpoint.train_mean)
        assert np.array_equal(back.train_values, small_checkpoint.train_values)
        assert back.train_values.shape == (300, 1)
        assert back.feature_names == small_checkpoint.feature_names
        assert back.extra == small_checkpoint.extra
        assert back.to_bytes() == small_checkpoint.to_bytes()

    def test_without_train_values(self, small_checkpoint):
        small_checkpoint.train_values = None
        back = Checkpoint.from_bytes(small_checkpoint.to_bytes())
        assert back.train_values is None
        assert np.array_equal(back.train_scores, small_checkpoint.train_scores)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetNotFoundError):
            load_checkpoint(tmp_path / "absent.ckpt")

    def test_version_mismatch_names_file(self, small_checkpoint, tmp_path):
        blob = bytearray(small_checkpoint.to_bytes())
        blob[4] = 2
        path = tmp_path / "future.ckpt"
        path.write_bytes(bytes(blob))
        with pytest.raises(SnapshotVersionError) as exc:
            load_checkpoint(path)
        assert exc.value.details["file_path"] == str(path)

    def test_flipped_bit_is_detected(self, small_checkpoint):
        blob = bytearray(small_checkpoint.to_bytes())
        blob[len(blob) // 2] ^= 0x80
        with pytest.raises(CorruptSnapshotError):
            Checkpoint.from_bytes(bytes(blob))

    def test_zero_epochs_stores_initial_model(self, small_config, small_pair):
        ckpt, result = train_detector(small_pair[0], small_config.with_overrides(epochs=0), seed=4)
        assert result.epoch_losses == []
        assert ckpt.model.params_equal(init_model(5, 1, 4, 2, seed=4))
