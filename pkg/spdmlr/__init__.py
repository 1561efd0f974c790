from spdmlr.geometry.metrics import MetricSpec, make_metric  # noqa: F401
from spdmlr.models.classifier import MlrHead, LogEigHead  # noqa: F401
from spdmlr.models.network import NetworkConfig, SpdNet  # noqa: F401
