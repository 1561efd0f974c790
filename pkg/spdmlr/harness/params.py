import json
import os

import numpy as np

from spdmlr.core.config import Config
from spdmlr.core.error import ConfigurationError, SpdMlrError
from spdmlr.core.logger import Logger
from spdmlr.geometry.metrics import MetricSpec
from spdmlr.models.network import NetworkConfig, SpdNet

META_KEY = "__meta__"


def network_meta(config):
    return {
        "widths": list(config.widths),
        "num_classes": config.num_classes,
        "head": config.head,
        "metric": None
        if config.metric is None
        else {
            "kind": config.metric.kind,
            "alpha": config.metric.alpha,
            "beta": config.metric.beta,
            "theta": config.metric.theta,
        },
        "reeig_eps": config.reeig_eps,
        "final_reeig": config.final_reeig,
        "seed": config.seed,
    }


def network_config_from_meta(meta):
    metric = meta.get("metric")
    return NetworkConfig(
        widths=meta["widths"],
        num_classes=meta["num_classes"],
        head=meta["head"],
        metric=None if metric is None else MetricSpec(**metric),
        reeig_eps=meta["reeig_eps"],
        final_reeig=meta["final_reeig"],
        seed=meta["seed"],
    )


def save_params(path, network, extra=None):
    """Write parameters as an npz archive; the network description travels as a JSON string."""
    meta = {"network": network_meta(network.config), "extra": extra or {}}
    arrays = {name: np.asarray(value) for name, value in network.params.items()}
    with open(path, "wb") as f:
        np.savez(f, **arrays, **{META_KEY: np.array(json.dumps(meta))})
    return path


def load_params(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"parameter file {path!r} does not exist")
    with np.load(path, allow_pickle=False) as archive:
        if META_KEY not in archive.files:
            raise ConfigurationError(
                f"{path} is not a parameter archive: missing network description"
            )
        meta = json.loads(str(archive[META_KEY]))
        params = {name: archive[name].copy() for name in archive.files if name != META_KEY}
    network = SpdNet(network_config_from_meta(meta["network"]), params)
    return network, meta.get("extra", {})


class ParamsManager:
    """
    Persist and restore trained networks.
    """

    def __init__(self, config=None):
        self.config = config or Config()
        self.log = Logger(self.__class__.__name__, self.config)

    def save(self, network, path, extra=None):
        try:
            save_params(path, network, extra)
        except OSError as e:
            self.log.error(f"Failed writing parameters to {path}: {e}")
            return False, e, f"Could not write parameters {path}: {e}"
        self.log.debug(f"Saved {len(network.params)} parameter arrays to {path}")
        return True, path, f"Wrote parameters to {path}"

    def load(self, path):
        try:
            network, extra = load_params(path)
        except (SpdMlrError, FileNotFoundError, OSError, ValueError, KeyError) as e:
            self.log.error(f"Failed loading parameters from {path}: {e}")
            return False, e, f"Could not load parameters {path}: {e}"
        return True, network, f"Loaded {network.config.head} network {list(network.config.widths)} from {path}"
