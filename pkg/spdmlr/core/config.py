import os
import copy
import yaml

import spdmlr.core.constants as constants
import spdmlr.core.util as util
from spdmlr.core.error import ConfigurationError

YAML_EXTENSIONS = (
    ".yaml",
    ".yml",
)


def parse_flat_value(raw):
    value = raw.strip()
    lowered = value.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    if "," in value:
        return [parse_flat_value(item) for item in value.split(",") if item.strip()]
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def parse_flat_config(content):
    """
    Parse the flat ``key=value`` configuration format.

    Keys are dotted paths into the nested configuration. Blank lines and lines
    starting with ``#`` are ignored.

    :param content: Raw file content
    :type content: str
    :returns: List of (dotted key, coerced value) pairs
    :rtype: list
    """
    settings = []
    for number, line in enumerate(content.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {number}: expected key=value, got {line!r}")
        key, value = line.split("=", maxsplit=1)
        key = key.strip()
        if not key:
            raise ConfigurationError(f"config line {number}: empty key")
        settings.append((key, parse_flat_value(value)))
    return settings


class Config:
    def __init__(self, config=None, args=None):
        config = copy.deepcopy(config or {})
        self.args = args or util.NoneAttrs()
        self.default_config = copy.deepcopy(constants.DEFAULT_CONFIG)
        self.config = self._merge_configs(copy.deepcopy(self.default_config), config)
        self.config_file = None
        env_level = os.environ.get(constants.LOG_LEVEL_ENV_VAR)
        if env_level:
            self.set("log.console.level", env_level, False)
        self._transform_config()

    @property
    def debug(self):
        return self.get("log.console.level").lower() == "debug"

    def load_from_file(self, filepath):
        if not os.path.exists(filepath):
            raise FileNotFoundError(f"The config file {filepath!r} does not exist.")
        self.config_file = filepath
        with open(filepath, "r") as f:
            content = f.read()
        if filepath.endswith(YAML_EXTENSIONS):
            config = yaml.safe_load(content) or {}
            self.config = self._merge_configs(self.config, config)
        else:
            for key, value in parse_flat_config(content):
                self.set(key, value, False)
        self._transform_config()

    def _transform_config(self):
        self.set("log.console.level", str(self.get("log.console.level")).upper(), False)
        self.set("debug.log.level", str(self.get("debug.log.level")).upper(), False)
        self.set("metric.kind", str(self.get("metric.kind")).lower(), False)
        self.set("optimizer.rule", str(self.get("optimizer.rule")).lower(), False)
        widths = self.get("widths")
        if isinstance(widths, str):
            widths = [item for item in widths.split(",") if item.strip()]
        elif not isinstance(widths, (list, tuple)):
            widths = [widths]
        try:
            self.set("widths", [int(width) for width in widths], False)
        except (TypeError, ValueError):
            raise ConfigurationError(f"widths must be a list of integers, got {widths!r}")

    def _merge_configs(self, default, config):
        if isinstance(default, dict) and isinstance(config, dict):
            for key, value in default.items():
                if key not in config:
                    config[key] = value
                else:
                    config[key] = self._merge_configs(value, config[key])
        return config

    def get(self, keys=None, config=None):
        config = config or self.config
        if keys:
            if isinstance(keys, str):
                keys = keys.split(".")
            for key in keys:
                if isinstance(config, dict) and key in config:
                    config = config[key]
                else:
                    return None
        return config

    def set(self, keys, value, transform=True):
        if isinstance(keys, str):
            keys = keys.split(".")
        config = self.config
        for key in keys[:-1]:
            config = config.setdefault(key, {})
        config[keys[-1]] = value
        if transform:
            self._transform_config()

    def validate_run_settings(self):
        checks = [
            ("lr", lambda v: v >= 0, "must be >= 0"),
            ("batch", lambda v: int(v) == v and v >= 1, "must be an integer >= 1"),
            ("epochs", lambda v: int(v) == v and v >= 0, "must be an integer >= 0"),
            ("weight_decay", lambda v: v >= 0, "must be >= 0"),
            ("reeig_eps", lambda v: v > 0, "must be > 0"),
            ("optimizer.beta1", lambda v: 0 <= v < 1, "must be in [0, 1)"),
            ("optimizer.beta2", lambda v: 0 <= v < 1, "must be in [0, 1)"),
            ("optimizer.eps", lambda v: v > 0, "must be > 0"),
            ("split.train_fraction", lambda v: 0 < v < 1, "must be in (0, 1)"),
            ("workers", lambda v: int(v) == v and v >= 1, "must be >= 1"),
        ]
        for key, check, reason in checks:
            value = self.get(key)
            try:
                valid = check(value)
            except (TypeError, ValueError):
                valid = False
            if not valid:
                raise ConfigurationError(f"{key} {reason}, got {value!r}")
        widths = self.get("widths")
        if len(widths) < 1 or any(width < 1 for width in widths):
            raise ConfigurationError(f"widths must be positive, got {widths!r}")
        if any(later > earlier for earlier, later in zip(widths, widths[1:])):
            raise ConfigurationError(f"widths must be non-increasing, got {widths!r}")
        if self.get("metric.kind") not in constants.HEAD_KINDS:
            raise ConfigurationError(
                f"metric.kind must be one of {', '.join(constants.HEAD_KINDS)}, got {self.get('metric.kind')!r}"
            )
        if self.get("optimizer.rule") not in constants.SHIFT_RULES:
            raise ConfigurationError(
                f"optimizer.rule must be one of {', '.join(constants.SHIFT_RULES)}, got {self.get('optimizer.rule')!r}"
            )
        return True

    def echo(self):
        return copy.deepcopy(
            {
                key: self.config[key]
                for key in (
                    "metric",
                    "widths",
                    "reeig_eps",
                    "network",
                    "optimizer",
                    "lr",
                    "batch",
                    "epochs",
                    "weight_decay",
                    "seed",
                    "split",
                )
            }
        )
