import copy
import time

import numpy as np

import spdmlr.core.constants as constants
from spdmlr.core.config import Config
from spdmlr.core.error import DimensionError, NumericalAbortError, ValidationError
from spdmlr.core.logger import Logger
from spdmlr.core.util import make_rng
from spdmlr.geometry.metrics import beta_candidates
from spdmlr.harness.evaluation import evaluate
from spdmlr.harness.report import EpochRecord, RunReport, SweepReport
from spdmlr.models.network import NetworkConfig, SpdNet
from spdmlr.optim.riemannian import Optimizer, OptimizerConfig


def param_norms(params):
    return {name: float(np.linalg.norm(value)) for name, value in params.items()}


class Trainer:
    """
    Mini-batch training of an SPD network on a split dataset.

    Every source of randomness (split, initialization, shuffling) derives from
    the configured seed.
    """

    def __init__(self, config=None):
        self.config = config or Config()
        self.log = Logger(self.__class__.__name__, self.config)

    def build_network(self, dataset, seed):
        network_config = NetworkConfig.from_config(self.config, dataset.num_classes, seed=seed)
        if dataset.dim != network_config.input_dim:
            raise DimensionError(
                f"dataset dimension {dataset.dim} does not match the first width {network_config.input_dim}"
            )
        return SpdNet(network_config)

    def build_optimizer(self, network):
        optimizer_config = OptimizerConfig.from_config(self.config, network.config.metric)
        rules = network.param_rules(optimizer_config.shift_rule)
        return Optimizer(optimizer_config, rules, self.config, decayed=network.decayed_params())

    def train(self, dataset, seed=None):
        """
        :returns: (RunReport, trained SpdNet)
        :raises NumericalAbortError: on a non-finite loss
        :raises ValidationError: when the dataset or its training split is empty
        """
        self.config.validate_run_settings()
        seed = self.config.get("seed") if seed is None else seed
        if dataset.size == 0:
            raise ValidationError("cannot train on an empty dataset")
        dataset.split(self.config.get("split.train_fraction"), seed)
        if dataset.train_indices.size == 0:
            raise ValidationError(
                f"training split is empty: {dataset.size} samples at train fraction "
                f"{self.config.get('split.train_fraction')}"
            )
        held_out = dataset.test_indices.size > 0
        # Nothing held out, e.g. a memorization run: score the training samples.
        score_indices = dataset.test_indices if held_out else dataset.train_indices
        network = self.build_network(dataset, seed)
        optimizer = self.build_optimizer(network)
        report = RunReport(
            config=self.config.echo(),
            seed=seed,
            head=str(network.config.metric or network.config.head),
        )
        rng = make_rng(seed)
        batch_size = int(self.config.get("batch"))
        epochs = int(self.config.get("epochs"))
        workers = int(self.config.get("workers"))
        train_indices = dataset.train_indices
        self.log.info(
            f"Training {report.head} on {train_indices.size} samples for {epochs} epochs, batch {batch_size}, seed {seed}"
        )
        for epoch in range(1, epochs + 1):
            start = time.perf_counter()
            order = rng.permutation(train_indices)
            losses = []
            for batch, first in enumerate(range(0, order.size, batch_size)):
                indices = order[first : first + batch_size]
                loss, grads, _ = network.loss_and_grads(
                    dataset.samples[indices], dataset.labels[indices]
                )
                if not np.isfinite(loss):
                    raise NumericalAbortError(epoch, batch, param_norms(network.params))
                network.update_params(optimizer.step(network.params, grads))
                losses.append(loss * indices.size)
            train_loss = float(np.sum(losses) / max(order.size, 1))
            result = evaluate(network, dataset, score_indices, workers)
            record = EpochRecord(
                epoch=epoch,
                train_loss=train_loss,
                test_accuracy=result.accuracy,
                balanced_accuracy=result.balanced_accuracy,
                seconds=time.perf_counter() - start,
            )
            report.add_epoch(record)
            self.log.debug(
                f"epoch {epoch}: loss={train_loss:.6f} acc={result.accuracy:.4f} bacc={result.balanced_accuracy:.4f}"
            )
        final = evaluate(network, dataset, score_indices, workers)
        report.confusion = final.confusion.tolist()
        if not held_out:
            report.warnings.append("no test samples; accuracies are on the training split")
        if final.warning:
            report.warnings.append(f"classes without test samples: {final.empty_classes}")
        self.log.info(report.summary_line())
        return report, network

    def _with_overrides(self, overrides):
        trainer = Trainer(Config(copy.deepcopy(self.config.config)))
        for key, value in overrides.items():
            trainer.config.set(key, value)
        return trainer

    def repeats(self, dataset, count):
        """Retrain with seeds ``seed .. seed + count - 1``, each with its own split and initialization."""
        base_seed = self.config.get("seed")
        sweep = SweepReport(label=f"{self.config.get('metric.kind')} x{count}")
        best = None
        for offset in range(count):
            seed = base_seed + offset
            report, network = self.train(dataset, seed=seed)
            sweep.add(f"seed={seed}", report)
            if best is None or report.final_accuracy > best[0].final_accuracy:
                best = (report, network)
        return sweep, best[1]

    def sweep(self, dataset, parameter):
        """
        Train over the candidate set of ``beta`` (LEM, alpha fixed to 1) or ``theta`` (LCM).
        """
        if parameter == "beta":
            settings = [
                {"metric.kind": constants.METRIC_LEM, "metric.alpha": 1.0, "metric.beta": beta}
                for beta in beta_candidates(self.config.get("widths")[-1])
            ]
        elif parameter == "theta":
            settings = [
                {"metric.kind": constants.METRIC_LCM, "metric.theta": theta}
                for theta in constants.THETA_CANDIDATES
            ]
        else:
            raise ValueError(f"unknown sweep parameter {parameter!r}")
        sweep = SweepReport(label=f"{parameter} sweep")
        best = None
        for overrides in settings:
            report, network = self._with_overrides(overrides).train(dataset)
            label = ",".join(
                f"{key.split('.')[-1]}={value:g}"
                for key, value in overrides.items()
                if key != "metric.kind"
            )
            sweep.add(label, report)
            if best is None or report.final_accuracy > best[0].final_accuracy:
                best = (report, network)
        return sweep, best[1]
