import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn import metrics

from spdmlr.core.error import DimensionError, ValidationError


@dataclass
class EvaluationResult:
    accuracy: float
    balanced_accuracy: float
    confusion: np.ndarray
    empty_classes: list = field(default_factory=list)

    @property
    def warning(self):
        return bool(self.empty_classes)

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "confusion": self.confusion.tolist(),
            "empty_classes": self.empty_classes,
        }


def confusion_matrix(labels, predictions, num_classes):
    return metrics.confusion_matrix(labels, predictions, labels=np.arange(num_classes))


def score_predictions(labels, predictions, num_classes):
    """
    Accuracy, balanced accuracy (mean per-class recall) and confusion matrix.

    Classes with no samples are left out of the balanced accuracy and listed
    in ``empty_classes``.

    :raises ValidationError: when there is nothing to score
    """
    labels = np.asarray(labels, dtype=int)
    predictions = np.asarray(predictions, dtype=int)
    if labels.shape != predictions.shape:
        raise DimensionError(f"{labels.size} labels but {predictions.size} predictions")
    if labels.size == 0:
        raise ValidationError("no samples to score")
    outside = np.concatenate([labels, predictions])
    outside = outside[(outside < 0) | (outside >= num_classes)]
    if outside.size:
        raise DimensionError(f"class index {int(outside[0])} outside [0, {num_classes})")
    confusion = confusion_matrix(labels, predictions, num_classes)
    with warnings.catch_warnings():
        # Empty classes are reported through empty_classes instead.
        warnings.simplefilter("ignore", UserWarning)
        balanced = metrics.balanced_accuracy_score(labels, predictions)
    return EvaluationResult(
        accuracy=float(metrics.accuracy_score(labels, predictions)),
        balanced_accuracy=float(balanced),
        confusion=confusion,
        empty_classes=np.flatnonzero(confusion.sum(axis=1) == 0).tolist(),
    )


def predict(network, samples, workers=1, chunk_size=64):
    """Predicted labels; with ``workers > 1`` chunks run on a thread pool over fixed parameters."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] == 0:
        return np.zeros(0, dtype=int)
    chunks = [
        samples[start : start + chunk_size] for start in range(0, samples.shape[0], chunk_size)
    ]
    if workers <= 1 or len(chunks) == 1:
        return np.concatenate([network.predict(chunk) for chunk in chunks])
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return np.concatenate(list(executor.map(network.predict, chunks)))


def evaluate(network, dataset, indices=None, workers=1):
    samples, labels = dataset.samples, dataset.labels
    if indices is not None:
        samples, labels = samples[indices], labels[indices]
    if samples.shape[0] and samples.shape[-1] != network.config.input_dim:
        raise DimensionError(
            f"network expects {network.config.input_dim}x{network.config.input_dim} inputs, dataset has {dataset.dim}"
        )
    if network.config.num_classes != dataset.num_classes:
        raise DimensionError(
            f"network has {network.config.num_classes} classes, dataset has {dataset.num_classes}"
        )
    return score_predictions(labels, predict(network, samples, workers), dataset.num_classes)
