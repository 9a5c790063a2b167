"""命令行端到端测试"""

import json

import jsonschema
import numpy as np
import pandas as pd
import pytest

from anomaly_tta.cli.main import EXIT_DIVERGENCE, EXIT_OK, EXIT_USAGE, main
from anomaly_tta.core.adaptation import offline_scores
from anomaly_tta.core.checkpoint import load_checkpoint, save_checkpoint
from anomaly_tta.core.data import SyntheticSpec, apply_scaler, generate_synthetic, load_csv
from anomaly_tta.core.model import init_model
from anomaly_tta.core.report_serializer import load_schema

SYNTH_FLAGS = [
    "--length-train", "300", "--length-test", "300",
    "--period", "20", "--shift-at", "150", "--anomaly-count", "4",
]
SMALL_SPEC = SyntheticSpec(length_train=300, length_test=300, period=20, shift_at=150, anomaly_count=4)


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def _run_ok(capsys, *argv):
    code, out, err = _run(capsys, *argv)
    assert code == EXIT_OK, err
    return json.loads(out)


@pytest.fixture
def data_dir(tmp_path, capsys):
    out = tmp_path / "data"
    _run_ok(capsys, "synth", "--out", out, *SYNTH_FLAGS)
    return out


@pytest.fixture
def run_dir(tmp_path, capsys, data_dir):
    out = tmp_path / "run"
    _run_ok(capsys, "train", "--train", data_dir / "train.csv", "--out", out, "--epochs", 3)
    return out


def _detect(capsys, data_dir, run_dir, *extra):
    return _run_ok(
        capsys, "detect", "--test", data_dir / "test.csv", "--checkpoint", run_dir / "model.ckpt",
        "--out", run_dir, *extra,
    )


class TestUsageErrors:
    """退出码与错误输出"""

    def test_help(self, capsys):
        code, out, _ = _run(capsys, "--help")
        assert code == EXIT_OK
        assert "detect" in out

    def test_unknown_command(self, capsys):
        assert _run(capsys, "explode")[0] == EXIT_USAGE

    def test_bad_choice(self, capsys, tmp_path):
        assert _run(capsys, "synth", "--out", tmp_path, "--format", "xml")[0] == EXIT_USAGE

    def test_train_without_data(self, capsys, tmp_path):
        code, out, err = _run(capsys, "train", "--out", tmp_path)
        assert code == EXIT_USAGE
        assert out == ""
        assert "train_path" in err

    def test_missing_train_file_names_path(self, capsys, tmp_path):
        missing = tmp_path / "nope.csv"
        code, _, err = _run(capsys, "train", "--train", missing, "--out", tmp_path)
        assert code == EXIT_USAGE
        assert str(missing) in err
        assert "DatasetNotFoundError" in err

    @pytest.mark.parametrize(
        "content, error_type",
        [
            (b"f1\n1\n\xff\xfe\n", "FileEncodingError"),
            (b"", "FileFormatError"),
            (b"f1,f2\n1,2\n3,4,5\n", "FileFormatError"),
            (b"f1,f2\n", "DataError"),
        ],
    )
    def test_malformed_train_csv(self, capsys, tmp_path, content, error_type):
        bad = tmp_path / "bad.csv"
        bad.write_bytes(content)
        code, out, err = _run(capsys, "train", "--train", bad, "--out", tmp_path / "run")
        assert code == EXIT_USAGE
        assert out == ""
        assert f'"error_type": "{error_type}"' in err
        if error_type != "DataError":
            assert f'"file_path": "{bad}"' in err

    @pytest.mark.parametrize("content", [b"", b"score\n1\n\xff\n", b"score\n1\n2,3\n"])
    def test_malformed_scores_csv(self, capsys, tmp_path, content):
        bad = tmp_path / "scores.csv"
        bad.write_bytes(content)
        code, _, err = _run(
            capsys, "evaluate", "--scores", bad, "--threshold", "oracle", "--out", tmp_path
        )
        assert code == EXIT_USAGE
        assert str(bad) in err

    def test_invalid_config_value(self, capsys, tmp_path, data_dir):
        code, _, err = _run(
            capsys, "train", "--train", data_dir / "train.csv", "--out", tmp_path, "--gamma", "2"
        )
        assert code == EXIT_USAGE
        assert "gamma" in err

    def test_oracle_with_adaptation(self, capsys, data_dir, run_dir):
        code, _, err = _run(
            capsys, "detect", "--test", data_dir / "test.csv", "--checkpoint", run_dir / "model.ckpt",
            "--out", run_dir, "--threshold", "oracle",
        )
        assert code == EXIT_USAGE
        assert "ConfigError" in err

    def test_divergence_exit_code(self, capsys, data_dir, run_dir):
        ckpt = load_checkpoint(run_dir / "model.ckpt")
        ckpt.model.weights[0][0, 0] = np.nan
        bad = save_checkpoint(ckpt, run_dir / "bad.ckpt")
        code, _, err = _run(
            capsys, "detect", "--test", data_dir / "test.csv", "--checkpoint", bad, "--out", run_dir
        )
        assert code == EXIT_DIVERGENCE
        assert "window_index" in err


class TestSynth:
    """synth 子命令"""

    def test_files_and_labels(self, capsys, data_dir):
        train = load_csv(data_dir / "train.csv", "label", label_required=False)
        test = load_csv(data_dir / "test.csv", "label")
        expected_train, expected_test = generate_synthetic(SMALL_SPEC)
        assert train.labels is None
        assert np.array_equal(train.values, expected_train.values)
        assert np.array_equal(test.values, expected_test.values)
        assert int(test.labels.sum()) == 4

    def test_deterministic_bytes(self, capsys, data_dir, tmp_path):
        again = tmp_path / "again"
        summary = _run_ok(capsys, "synth", "--out", again, *SYNTH_FLAGS)
        assert summary["anomalies"] == 4
        for name in ("train.csv", "test.csv"):
            assert (again / name).read_bytes() == (data_dir / name).read_bytes()

    def test_text_format(self, capsys, tmp_path):
        code, out, _ = _run(capsys, "synth", "--out", tmp_path, "--format", "text", *SYNTH_FLAGS)
        assert code == EXIT_OK
        assert out.splitlines()[0].split() == ["command", "synth"]


class TestTrain:
    """train 子命令"""

    def test_outputs(self, capsys, data_dir, tmp_path):
        out = tmp_path / "t"
        summary = _run_ok(capsys, "train", "--train", data_dir / "train.csv", "--out", out, "--epochs", 2)
        assert summary["n_windows"] == 296
        assert summary["parameters"] == 71
        scores = pd.read_csv(out / "train_scores.csv")
        assert list(scores.columns) == ["window", "offset", "score"]
        assert len(scores) == 296 * 5
        thresholds = pd.read_csv(out / "thresholds.csv", float_precision="round_trip")
        assert list(thresholds.columns) == ["p", "tau", "tau_dt"]
        assert len(thresholds) == 101
        assert thresholds.loc[thresholds["p"] == 99.0, "tau"].item() == summary["q99"]
        assert thresholds.loc[thresholds["p"] == 99.0, "tau_dt"].item() == summary["q99_dt"]

    def test_deterministic_bytes(self, capsys, data_dir, tmp_path):
        out = tmp_path / "t"
        names = ("model.ckpt", "train_scores.csv", "thresholds.csv")
        argv = ("train", "--train", data_dir / "train.csv", "--out", out, "--epochs", 2, "--seed", 3)
        _run_ok(capsys, *argv)
        first = {n: (out / n).read_bytes() for n in names}
        _run_ok(capsys, *argv)
        assert {n: (out / n).read_bytes() for n in names} == first

    def test_zero_epochs_keeps_initialisation(self, capsys, data_dir, tmp_path):
        out = tmp_path / "t"
        summary = _run_ok(
            capsys, "train", "--train", data_dir / "train.csv", "--out", out, "--epochs", 0, "--seed", 9
        )
        assert summary["final_loss"] is None
        assert load_checkpoint(out / "model.ckpt").model.params_equal(init_model(5, 1, 4, 2, seed=9))

    def test_config_file_and_cli_precedence(self, capsys, data_dir, tmp_path):
        config = tmp_path / "run.toml"
        config.write_text("epochs = 1\nhidden = 3\n")
        summary = _run_ok(
            capsys, "train", "--config", config, "--train", data_dir / "train.csv",
            "--out", tmp_path / "t", "--epochs", 2,
        )
        assert summary["epochs"] == 2
        assert summary["parameters"] == 55


class TestDetect:
    """detect 子命令"""

    @pytest.mark.parametrize("stride", [5, 2, 3])
    def test_row_count(self, capsys, data_dir, run_dir, stride):
        summary = _detect(capsys, data_dir, run_dir, "--stride-test", stride)
        n, w = 300, 5
        expected = (n - w) // stride * stride + w
        assert summary["n_timesteps"] == expected
        frame = pd.read_csv(run_dir / "scores.csv")
        assert len(frame) == expected
        assert frame["timestep"].tolist() == list(range(expected))
        assert summary["windows_processed"] == (n - w) // stride + 1

    def test_outputs_and_schema(self, capsys, data_dir, run_dir):
        summary = _detect(capsys, data_dir, run_dir, "--train", data_dir / "train.csv")
        on_disk = json.loads((run_dir / "summary.json").read_text(encoding="utf-8"))
        assert on_disk == summary
        jsonschema.validate(summary, load_schema("detect_summary"))
        jsonschema.validate(summary["report"], load_schema("eval_report"))
        assert summary["variant"] == "DT+TTA"
        assert summary["window"] == 5
        assert summary["kld"]["total"] > 0
        frame = pd.read_csv(run_dir / "scores.csv")
        assert list(frame.columns) == ["timestep", "score", "prediction", "label", "mu_value"]
        assert len(pd.read_csv(run_dir / "trend.csv")) == summary["windows_processed"]

    def test_window_comes_from_checkpoint(self, capsys, data_dir, tmp_path):
        out = tmp_path / "w4"
        _run_ok(capsys, "train", "--train", data_dir / "train.csv", "--out", out,
                "--epochs", 1, "--window", 4)
        summary = _run_ok(capsys, "detect", "--test", data_dir / "test.csv", "--out", out)
        assert summary["window"] == 4
        assert summary["n_timesteps"] == 300

    def test_without_adaptation_matches_offline_inference(self, capsys, data_dir, run_dir):
        summary = _detect(capsys, data_dir, run_dir, "--no-detrend", "--no-adapt")
        assert summary["variant"] == "none"
        assert summary["sgd_steps"] == 0
        ckpt = load_checkpoint(run_dir / "model.ckpt")
        test = apply_scaler(load_csv(data_dir / "test.csv", "label"), ckpt.scaler)
        _, expected = offline_scores(ckpt.model, test, 5, 5)
        frame = pd.read_csv(run_dir / "scores.csv", float_precision="round_trip")
        assert np.array_equal(frame["score"].to_numpy(), expected)

    def test_deterministic_bytes(self, capsys, data_dir, run_dir):
        names = ("scores.csv", "trend.csv", "summary.json")
        _detect(capsys, data_dir, run_dir)
        first = {n: (run_dir / n).read_bytes() for n in names}
        _detect(capsys, data_dir, run_dir)
        assert {n: (run_dir / n).read_bytes() for n in names} == first


class TestEvaluate:
    """evaluate 子命令"""

    def test_reloaded_scores_reproduce_detect_report(self, capsys, data_dir, run_dir):
        summary = _detect(capsys, data_dir, run_dir)
        report = _run_ok(
            capsys, "evaluate", "--scores", run_dir / "scores.csv",
            "--checkpoint", run_dir / "model.ckpt", "--threshold", "q99", "--out", run_dir / "eval",
        )
        assert report == summary["report"]
        on_disk = json.loads((run_dir / "eval" / "eval_report.json").read_text(encoding="utf-8"))
        assert on_disk == report
        thresholds = pd.read_csv(run_dir / "thresholds.csv", float_precision="round_trip")
        assert report["tau"] == thresholds.loc[thresholds["p"] == 99.0, "tau_dt"].item()

    def test_no_detrend_uses_offline_train_scores(self, capsys, data_dir, run_dir):
        summary = _detect(capsys, data_dir, run_dir, "--no-detrend", "--no-adapt")
        report = _run_ok(
            capsys, "evaluate", "--scores", run_dir / "scores.csv",
            "--checkpoint", run_dir / "model.ckpt", "--no-detrend", "--out", run_dir / "eval",
        )
        assert report == summary["report"]
        thresholds = pd.read_csv(run_dir / "thresholds.csv", float_precision="round_trip")
        assert report["tau"] == thresholds.loc[thresholds["p"] == 99.0, "tau"].item()

    def test_oracle_not_below_percentile(self, capsys, data_dir, run_dir):
        _detect(capsys, data_dir, run_dir)
        scores = run_dir / "scores.csv"
        q = _run_ok(capsys, "evaluate", "--scores", scores, "--checkpoint", run_dir / "model.ckpt",
                    "--out", run_dir / "q")
        oracle = _run_ok(capsys, "evaluate", "--scores", scores, "--threshold", "oracle",
                         "--out", run_dir / "o")
        assert oracle["Thr"] == "oracle"
        assert oracle["F1"] >= q["F1"]
        assert oracle["AUROC"] == q["AUROC"]

    def test_perfect_separation(self, capsys, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("timestep,score,label\n0,0.1,0\n1,0.2,0\n2,0.9,1\n3,0.8,1\n")
        report = _run_ok(capsys, "evaluate", "--scores", path, "--threshold", "oracle", "--out", tmp_path)
        assert report["F1"] == report["F1+"] == report["AUROC"] == report["AUPRC"] == 1.0
        jsonschema.validate(report, load_schema("eval_report"))

    def test_single_class_gives_null_auc(self, capsys, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("score,label\n0.1,0\n0.9,0\n")
        report = _run_ok(capsys, "evaluate", "--scores", path, "--threshold", "fixed:0.5", "--out", tmp_path)
        assert report["AUROC"] is None
        assert report["AUPRC"] is None
        assert report["FP"] == 1

    def test_labels_file_aligned_by_timestep(self, capsys, tmp_path):
        scores = tmp_path / "scores.csv"
        scores.write_text("timestep,score\n2,0.9\n3,0.1\n")
        labels = tmp_path / "labels.csv"
        labels.write_text("value,label\n1.0,0\n2.0,0\n3.0,1\n4.0,0\n5.0,0\n")
        report = _run_ok(capsys, "evaluate", "--scores", scores, "--labels", labels,
                         "--threshold", "fixed:0.5", "--out", tmp_path)
        assert (report["TP"], report["TN"], report["FP"], report["FN"]) == (1, 1, 0, 0)

    def test_percentile_needs_checkpoint(self, capsys, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("score,label\n0.1,0\n0.9,1\n")
        code, _, err = _run(capsys, "evaluate", "--scores", path, "--out", tmp_path)
        assert code == EXIT_USAGE
        assert "checkpoint_path" in err

    def test_no_label_source(self, capsys, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("score\n0.1\n0.9\n")
        code, _, _ = _run(capsys, "evaluate", "--scores", path, "--threshold", "oracle", "--out", tmp_path)
        assert code == EXIT_USAGE


class TestAblate:
    """ablate 子命令"""

    def test_synthetic_grid(self, capsys, tmp_path):
        out = tmp_path / "ab"
        data = _run_ok(capsys, "ablate", "--out", out, *SYNTH_FLAGS, "--seeds", 0, 1, "--epochs", 2)
        jsonschema.validate(data, load_schema("ablation"))
        assert data["source"] == "synthetic"
        assert data["shift_at"] == 150
        assert [r["variant"] for r in data["rows"]] == ["none", "DT", "TTA", "DT+TTA"]
        assert all("post_shift_fp" in r for r in data["rows"])
        assert len(data["cells"]) == 8
        traces = sorted(p.name for p in (out / "traces").iterdir())
        assert len(traces) == 8
        assert "dt_tta_seed1.csv" in traces
        table = (out / "ablation.txt").read_text(encoding="utf-8").splitlines()
        assert table[0].split()[:5] == ["variant", "F1", "F1-PA", "AUROC", "AUPRC"]
        assert json.loads((out / "ablation.json").read_text(encoding="utf-8")) == data

    def test_threshold_sweep_trace(self, capsys, tmp_path):
        out = tmp_path / "sw"
        data = _run_ok(
            capsys, "ablate", "--out", out, *SYNTH_FLAGS, "--seeds", 0, "--epochs", 2,
            "--no-traces", "--sweep", "q90:q100:0.5",
        )
        assert data["f1_trace"] == str(out / "f1_trace.csv")
        trace = pd.read_csv(out / "f1_trace.csv", float_precision="round_trip")
        assert list(trace.columns) == ["variant", "seed", "p", "tau", "F1", "F1-PA"]
        assert len(trace) == 4 * 21
        assert trace["p"].min() == 90.0
        assert trace["p"].max() == 100.0
        assert trace["variant"].unique().tolist() == ["none", "DT", "TTA", "DT+TTA"]
        for _, group in trace.groupby("variant"):
            assert group["tau"].is_monotonic_increasing

    def test_invalid_sweep(self, capsys, tmp_path):
        code, _, err = _run(capsys, "ablate", "--out", tmp_path, "--sweep", "q100:q90:1")
        assert code == EXIT_USAGE
        assert "sweep" in err

    def test_zero_eta_makes_tta_rows_degenerate(self, capsys, tmp_path):
        data = _run_ok(capsys, "ablate", "--out", tmp_path, *SYNTH_FLAGS,
                       "--seeds", 0, "--epochs", 2, "--eta", 0, "--no-traces")
        rows = {r["variant"]: {k: v for k, v in r.items() if k != "variant"} for r in data["rows"]}
        assert rows["TTA"] == rows["none"]
        assert rows["DT+TTA"] == rows["DT"]
        assert not (tmp_path / "traces").exists()

    def test_csv_source(self, capsys, data_dir, tmp_path):
        data = _run_ok(capsys, "ablate", "--train", data_dir / "train.csv", "--test", data_dir / "test.csv",
                       "--out", tmp_path, "--seeds", 0, "--epochs", 1, "--no-traces")
        assert data["source"] == "csv"
        assert data["shift_at"] is None
        assert all("post_shift_fp" not in r for r in data["rows"])

    def test_train_without_test(self, capsys, data_dir, tmp_path):
        code, _, _ = _run(capsys, "ablate", "--train", data_dir / "train.csv", "--out", tmp_path)
        assert code == EXIT_USAGE

    def test_deterministic_bytes(self, capsys, tmp_path):
        argv = ("ablate", "--out", tmp_path, *SYNTH_FLAGS, "--seeds", 0, "--epochs", 1)
        _run_ok(capsys, *argv)
        first = (tmp_path / "ablation.json").read_bytes()
        trace = (tmp_path / "traces" / "dt_tta_seed0.csv").read_bytes()
        _run_ok(capsys, *argv)
        assert (tmp_path / "ablation.json").read_bytes() == first
        assert (tmp_path / "traces" / "dt_tta_seed0.csv").read_bytes() == trace
