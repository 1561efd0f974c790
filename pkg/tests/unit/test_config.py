import os

import pytest

import spdmlr.core.constants as constants
from spdmlr.core.config import Config, parse_flat_config, parse_flat_value
from spdmlr.core.error import ConfigurationError

from ..base import write_file


def test_defaults():
    config = Config()
    assert config.get("metric.kind") == constants.METRIC_LEM
    assert config.get("widths") == [20, 16, 8]
    assert config.get("log.console.level") == "ERROR"
    assert config.get("optimizer.rule") == constants.RULE_AIM
    assert config.get("missing.key") is None
    assert config.validate_run_settings()


def test_overrides_merge_with_defaults():
    config = Config(config={"optimizer": {"beta1": 0.5}})
    assert config.get("optimizer.beta1") == 0.5
    assert config.get("optimizer.beta2") == 0.999


@pytest.mark.parametrize(
    "raw,expected",
    [
        ("true", True),
        ("Off", False),
        ("12", 12),
        ("1e-3", 1e-3),
        ("20,16,8", [20, 16, 8]),
        ("lcm", "lcm"),
    ],
)
def test_parse_flat_value(raw, expected):
    assert parse_flat_value(raw) == expected


def test_parse_flat_config():
    content = "# comment\n\nmetric.kind = lcm\nmetric.theta=0.5\nwidths=10,8\n"
    assert parse_flat_config(content) == [
        ("metric.kind", "lcm"),
        ("metric.theta", 0.5),
        ("widths", [10, 8]),
    ]
    with pytest.raises(ConfigurationError):
        parse_flat_config("lr 0.1\n")
    with pytest.raises(ConfigurationError):
        parse_flat_config("=0.1\n")


def test_load_flat_file(test_dir):
    filepath = os.path.join(test_dir, "run.conf")
    write_file(test_dir, "run.conf", "metric.kind=LCM\nwidths=6\noptimizer.rule=PEM\nlr=0\n")
    config = Config()
    config.load_from_file(filepath)
    assert config.config_file == filepath
    assert config.get("metric.kind") == constants.METRIC_LCM
    assert config.get("optimizer.rule") == constants.RULE_PEM
    assert config.get("widths") == [6]
    assert config.get("lr") == 0
    assert config.validate_run_settings()


def test_load_yaml_file(test_dir):
    write_file(
        test_dir, "run.yaml", "metric:\n  kind: lem\n  beta: 0.25\nwidths: 12,10\nepochs: 5\n"
    )
    config = Config()
    config.load_from_file(os.path.join(test_dir, "run.yaml"))
    assert config.get("metric.beta") == 0.25
    assert config.get("metric.alpha") == 1.0
    assert config.get("widths") == [12, 10]
    assert config.get("epochs") == 5


def test_load_missing_file():
    with pytest.raises(FileNotFoundError):
        Config().load_from_file("/nonexistent/spdmlr.conf")


def test_bad_widths():
    with pytest.raises(ConfigurationError):
        Config(config={"widths": "a,b"})


@pytest.mark.parametrize(
    "key,value",
    [
        ("lr", -0.1),
        ("batch", 0),
        ("epochs", 1.5),
        ("reeig_eps", 0.0),
        ("optimizer.beta2", 1.0),
        ("split.train_fraction", 1.0),
        ("workers", 0),
        ("widths", [4, 6]),
        ("metric.kind", "bw"),
        ("optimizer.rule", "adam"),
    ],
)
def test_validate_run_settings(test_config, key, value):
    test_config.set(key, value)
    with pytest.raises(ConfigurationError) as excinfo:
        test_config.validate_run_settings()
    assert key in str(excinfo.value)


def test_log_level_from_environment(monkeypatch):
    monkeypatch.setenv(constants.LOG_LEVEL_ENV_VAR, "debug")
    config = Config()
    assert config.get("log.console.level") == "DEBUG"
    assert config.debug


def test_echo_lists_run_settings(test_config):
    echoed = test_config.echo()
    assert echoed["widths"] == [4, 3]
    assert "log" not in echoed
    echoed["widths"].append(2)
    assert test_config.get("widths") == [4, 3]
