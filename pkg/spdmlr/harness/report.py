import os
from dataclasses import asdict, dataclass, field

import numpy as np

import spdmlr.core.constants as constants
from spdmlr.core import util


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    test_accuracy: float
    balanced_accuracy: float
    seconds: float


@dataclass
class RunReport:
    """Per-epoch metrics of one training run plus the configuration it ran with."""

    config: dict
    seed: int
    head: str
    epochs: list = field(default_factory=list)
    confusion: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def add_epoch(self, record):
        if self.epochs and record.epoch != self.epochs[-1].epoch + 1:
            raise ValueError(f"epoch {record.epoch} does not follow epoch {self.epochs[-1].epoch}")
        self.epochs.append(record)

    @property
    def final(self):
        return self.epochs[-1] if self.epochs else None

    @property
    def final_accuracy(self):
        return self.final.test_accuracy if self.final else float("nan")

    @property
    def final_balanced_accuracy(self):
        return self.final.balanced_accuracy if self.final else float("nan")

    def losses(self):
        return [record.train_loss for record in self.epochs]

    def to_dict(self):
        return {
            "head": self.head,
            "seed": self.seed,
            "config": self.config,
            "epochs": [asdict(record) for record in self.epochs],
            "final": asdict(self.final) if self.final else None,
            "confusion": self.confusion,
            "warnings": self.warnings,
        }

    def summary_line(self):
        if not self.final:
            return f"{self.head}: no epochs run"
        f = self.final
        return (
            f"{self.head}: epochs={f.epoch} loss={f.train_loss:.6f} "
            f"acc={f.test_accuracy:.4f} bacc={f.balanced_accuracy:.4f}"
        )

    def write(self, out_dir, filename=constants.REPORT_FILENAME):
        util.ensure_dir(out_dir)
        return util.write_json(os.path.join(out_dir, filename), self.to_dict())


@dataclass
class SweepReport:
    """Several runs of one configuration family, e.g. a beta sweep or repeated seeds."""

    label: str
    runs: list = field(default_factory=list)
    settings: list = field(default_factory=list)

    def add(self, setting, report):
        self.settings.append(setting)
        self.runs.append(report)

    def accuracy_stats(self):
        accuracies = np.array([run.final_accuracy for run in self.runs])
        if accuracies.size == 0:
            return float("nan"), float("nan")
        return float(np.mean(accuracies)), float(np.std(accuracies))

    def best(self):
        index = int(np.argmax([run.final_accuracy for run in self.runs]))
        return self.settings[index], self.runs[index]

    def to_dict(self):
        mean, std = self.accuracy_stats()
        return {
            "label": self.label,
            "accuracy_mean": mean,
            "accuracy_std": std,
            "runs": [
                {"setting": setting, "report": run.to_dict()}
                for setting, run in zip(self.settings, self.runs)
            ],
        }

    def summary_line(self):
        mean, std = self.accuracy_stats()
        return f"{self.label}: {len(self.runs)} runs, acc={100 * mean:.2f}±{100 * std:.2f}"

    def rows(self):
        return [
            (str(setting), f"{run.final_accuracy:.4f}", f"{run.final_balanced_accuracy:.4f}")
            for setting, run in zip(self.settings, self.runs)
        ]

    def write(self, out_dir, filename=constants.REPORT_FILENAME):
        util.ensure_dir(out_dir)
        return util.write_json(os.path.join(out_dir, filename), self.to_dict())
