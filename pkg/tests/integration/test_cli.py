import json
import os

import numpy as np
import pytest

import spdmlr.core.constants as constants
from spdmlr.harness.cloud import parse_cloud
from spdmlr.harness.dataset import load_dataset
from spdmlr.main import run
from spdmlr.models.network import SpdNet

CONFIG = "widths=4,3\nepochs=2\nbatch=10\nsynth.classes=3\nsynth.per_class=10\n"


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text(CONFIG)
    return str(path)


@pytest.fixture
def data_file(tmp_path):
    path = str(tmp_path / "train.spdcsv")
    args = ["synth", "--n", "4", "--classes", "3", "--per-class", "10", "--spread", "0.1"]
    assert run(args + ["--out", path]) == 0
    return path


def test_synth_writes_dataset(data_file):
    dataset = load_dataset(data_file)
    assert dataset.size == 30
    assert dataset.dim == 4


def test_synth_generation_failure(tmp_path):
    path = str(tmp_path / "fail.spdcsv")
    args = [
        "synth", "--n", "2", "--classes", "10", "--per-class", "5", "--spread", "1.0", "--out", path
    ]
    assert run(args) == constants.EXIT_NUMERICAL_ABORT
    assert not os.path.exists(path)


def test_train_then_eval(config_file, data_file, tmp_path, capsys):
    out = str(tmp_path / "out")
    assert run(["--config", config_file, "train", "--data", data_file, "--out", out]) == 0
    with open(os.path.join(out, constants.REPORT_FILENAME)) as f:
        report = json.load(f)
    assert len(report["epochs"]) == 2
    assert report["config"]["widths"] == [4, 3]
    assert os.path.exists(os.path.join(out, constants.PARAMS_FILENAME))
    capsys.readouterr()
    params = os.path.join(out, constants.PARAMS_FILENAME)
    assert run(["eval", "--params", params, "--data", data_file, "--workers", "2"]) == 0
    captured = capsys.readouterr().out
    assert "acc=" in captured
    assert '"confusion"' in captured


def test_train_on_synth_source(config_file, tmp_path, capsys):
    out = str(tmp_path / "out")
    args = ["train", "--config", config_file, "--data", "synth", "--out", out]
    assert run(args + ["--epochs", "1"]) == 0
    with open(os.path.join(out, constants.REPORT_FILENAME)) as f:
        assert len(json.load(f)["epochs"]) == 1


def test_config_from_environment(config_file, data_file, tmp_path, monkeypatch):
    monkeypatch.setenv(constants.CONFIG_ENV_VAR, config_file)
    out = str(tmp_path / "out")
    assert run(["train", "--data", data_file, "--out", out, "--repeats", "2"]) == 0
    with open(os.path.join(out, constants.REPORT_FILENAME)) as f:
        assert len(json.load(f)["runs"]) == 2


def test_train_rejects_conflicting_options(config_file, data_file, tmp_path):
    out = str(tmp_path / "out")
    base = ["--config", config_file, "train", "--data", data_file, "--out", out]
    assert run(base + ["--sweep-beta", "--sweep-theta"]) == constants.EXIT_VALIDATION_FAILURE
    assert run(base + ["--sweep-beta", "--repeats", "2"]) == constants.EXIT_VALIDATION_FAILURE
    assert run(base + ["--repeats", "0"]) == constants.EXIT_VALIDATION_FAILURE
    assert not os.path.exists(out)


def test_train_reports_bad_input(config_file, tmp_path):
    bad = tmp_path / "bad.spdcsv"
    bad.write_text("n=2,classes=2\n0,1,0,0\n")
    out = str(tmp_path / "out")
    assert run(["--config", config_file, "train", "--data", str(bad), "--out", out]) == 1
    missing = str(tmp_path / "nope")
    assert run(["--config", config_file, "train", "--data", missing, "--out", out]) == 1
    assert run(["--config", str(tmp_path / "missing.conf"), "gradcheck"]) == 1


def test_train_numerical_abort(config_file, data_file, tmp_path, monkeypatch):
    monkeypatch.setattr(SpdNet, "loss_and_grads", lambda self, S, labels: (float("inf"), {}, None))
    out = str(tmp_path / "out")
    assert run(["--config", config_file, "train", "--data", data_file, "--out", out]) == 2


def test_eval_reports_missing_params(data_file, tmp_path):
    assert run(["eval", "--params", str(tmp_path / "missing.npz"), "--data", data_file]) == 1


def test_eval_rejects_class_count_mismatch(config_file, data_file, tmp_path):
    out = str(tmp_path / "out")
    assert run(["--config", config_file, "train", "--data", data_file, "--out", out]) == 0
    two_classes = str(tmp_path / "two_classes.spdcsv")
    args = ["synth", "--n", "4", "--classes", "2", "--per-class", "5", "--spread", "0.1"]
    assert run(args + ["--out", two_classes]) == 0
    params = os.path.join(out, constants.PARAMS_FILENAME)
    assert run(["eval", "--params", params, "--data", two_classes]) == 1


def test_header_only_dataset_is_rejected(config_file, data_file, tmp_path):
    empty = tmp_path / "empty.spdcsv"
    empty.write_text("n=4,classes=3\n")
    out = str(tmp_path / "out")
    assert run(["--config", config_file, "train", "--data", str(empty), "--out", out]) == 1
    assert not os.path.exists(os.path.join(out, constants.REPORT_FILENAME))
    assert run(["--config", config_file, "train", "--data", data_file, "--out", out]) == 0
    params = os.path.join(out, constants.PARAMS_FILENAME)
    assert run(["eval", "--params", params, "--data", str(empty)]) == 1


def test_usage_errors_are_validation_failures(capsys):
    assert run(["train"]) == constants.EXIT_VALIDATION_FAILURE
    assert run(["no-such-command"]) == constants.EXIT_VALIDATION_FAILURE
    assert run(["synth", "--n", "four"]) == constants.EXIT_VALIDATION_FAILURE
    assert "usage" in capsys.readouterr().err


def test_hyperplane_cloud(tmp_path):
    path = str(tmp_path / "cloud.txt")
    args = ["hyperplane-cloud", "--metric", "lcm", "--theta", "0.5", "--shift", "1.5", "0.3", "1"]
    args += ["--normal", "1", "0", "0", "-1", "--out", path, "--resolution", "11"]
    assert run(args) == 0
    with open(path) as f:
        header, rows = parse_cloud(f.read())
    assert header == "# n=2 metric=lcm params=theta=0.5"
    np.testing.assert_array_equal(rows[0], [1.5, 0.3, 1.0, 1.0])


def test_hyperplane_cloud_rejects_bad_input(tmp_path):
    path = str(tmp_path / "cloud.txt")
    base = ["hyperplane-cloud", "--out", path]
    assert run(base + ["--shift", "1", "0", "1", "--normal", "0", "0", "0"]) == 1
    assert run(base + ["--shift", "1", "2", "1", "--normal", "1", "0", "1"]) == 1
    shift_3x3 = ["1", "0", "0", "0", "1", "0", "0", "0", "1"]
    assert run(base + ["--shift"] + shift_3x3 + ["--normal", "1", "0", "1"]) == 1
    assert run(base + ["--shift", "a", "0", "1", "--normal", "1", "0", "1"]) == 1


def test_gradcheck_command(capsys):
    assert run(["gradcheck"]) == 0
    assert "gradcheck passed" in capsys.readouterr().out


def test_equivcheck_command(capsys):
    assert run(["equivcheck", "--steps", "10"]) == 0
    assert "metric=LEM(alpha=1,beta=0) steps=10" in capsys.readouterr().out
    assert run(["equivcheck", "--steps", "0"]) == 1


def test_version(capsys):
    with pytest.raises(SystemExit) as excinfo:
        run(["--version"])
    assert excinfo.value.code == 0
    assert "spdmlr version" in capsys.readouterr().out
