import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

import spdmlr.core.constants as constants
from spdmlr.core.config import Config
from spdmlr.core.error import (
    DatasetParseError,
    GenerationError,
    NotPositiveDefiniteError,
    NotSymmetricError,
    SpdMlrError,
    ValidationError,
)
from spdmlr.core.logger import Logger
from spdmlr.core.util import make_rng
from spdmlr.geometry import matfun
from spdmlr.geometry.metrics import MetricSpec, make_metric


@dataclass
class Dataset:
    samples: np.ndarray
    labels: np.ndarray
    num_classes: int
    train_indices: Optional[np.ndarray] = None
    test_indices: Optional[np.ndarray] = None
    prototypes: Optional[np.ndarray] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.samples.ndim != 3 or self.samples.shape[1] != self.samples.shape[2]:
            raise ValidationError(f"samples must be a (N, n, n) stack, got {self.samples.shape}")
        if self.labels.shape != (self.samples.shape[0],):
            raise ValidationError(
                f"expected {self.samples.shape[0]} labels, got {self.labels.shape}"
            )
        out_of_range = np.any(self.labels < 0) or np.any(self.labels >= self.num_classes)
        if self.num_classes < 1 or out_of_range:
            raise ValidationError(f"labels must lie in [0, {self.num_classes})")
        if self.samples.shape[0]:
            matfun.check_symmetric(self.samples)
            matfun.as_spd(self.samples)

    @property
    def dim(self):
        return self.samples.shape[-1]

    @property
    def size(self):
        return self.samples.shape[0]

    def __len__(self):
        return self.size

    def class_counts(self, indices=None):
        labels = self.labels if indices is None else self.labels[indices]
        return np.bincount(labels, minlength=self.num_classes)

    def split(self, train_fraction, seed):
        """
        Seeded stratified train/test split; every class contributes
        ``round(train_fraction * count)`` samples to the training set.
        """
        rng = make_rng(seed)
        train, test = [], []
        for label in range(self.num_classes):
            members = rng.permutation(np.flatnonzero(self.labels == label))
            cut = int(round(train_fraction * len(members)))
            train.extend(members[:cut])
            test.extend(members[cut:])
        self.train_indices = np.sort(np.asarray(train, dtype=int))
        self.test_indices = np.sort(np.asarray(test, dtype=int))
        return self

    def subset(self, indices):
        return Dataset(self.samples[indices], self.labels[indices], self.num_classes)

    def train(self):
        return self.subset(self.train_indices)

    def test(self):
        return self.subset(self.test_indices)


def parse_header(line, number):
    fields = {}
    for part in line.split(","):
        if "=" not in part:
            raise DatasetParseError(
                number, f"malformed header field {part.strip()!r}, expected n=<dim>,classes=<C>"
            )
        key, value = part.split("=", maxsplit=1)
        fields[key.strip()] = value.strip()
    try:
        n, num_classes = int(fields["n"]), int(fields["classes"])
    except (KeyError, ValueError):
        raise DatasetParseError(number, "header must read n=<dim>,classes=<C>")
    if n < 1 or n > constants.MAX_MATRIX_DIM or num_classes < 1:
        raise DatasetParseError(number, f"invalid header values n={n}, classes={num_classes}")
    return n, num_classes


def parse_row(line, number, n, num_classes):
    values = [value.strip() for value in line.split(",")]
    if len(values) != n * n + 1:
        raise DatasetParseError(
            number, f"expected a label and {n * n} entries, got {len(values)} values"
        )
    try:
        label = int(values[0])
        entries = np.array([float(value) for value in values[1:]]).reshape(n, n)
    except ValueError as e:
        raise DatasetParseError(number, f"non-numeric value: {e}")
    if not 0 <= label < num_classes:
        raise DatasetParseError(number, f"label {label} outside [0, {num_classes})")
    try:
        matfun.check_symmetric(entries)
    except NotSymmetricError as e:
        raise DatasetParseError(number, str(e))
    try:
        matfun.as_spd(entries)
    except NotPositiveDefiniteError as e:
        raise NotPositiveDefiniteError(e.min_eigenvalue, f"line {number}: {e}")
    return label, entries


def parse_spdcsv(content):
    header, rows = None, []
    for number, line in enumerate(content.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if header is None:
            header = parse_header(line, number)
            continue
        rows.append(parse_row(line, number, *header))
    if header is None:
        raise DatasetParseError(1, "missing header line n=<dim>,classes=<C>")
    n, num_classes = header
    samples = np.array([entries for _, entries in rows]).reshape(len(rows), n, n)
    labels = np.array([label for label, _ in rows], dtype=int)
    return Dataset(samples, labels, num_classes)


def format_spdcsv(dataset):
    lines = [f"n={dataset.dim},classes={dataset.num_classes}"]
    for sample, label in zip(dataset.samples, dataset.labels):
        lines.append(",".join([str(int(label))] + [repr(float(value)) for value in sample.ravel()]))
    return "\n".join(lines) + "\n"


def load_dataset(path, format=constants.SPDCSV_FORMAT):
    if format not in constants.DATASET_FORMATS:
        raise ValidationError(
            f"unknown dataset format {format!r}, expected one of {constants.DATASET_FORMATS}"
        )
    if not os.path.exists(path):
        raise FileNotFoundError(f"dataset file {path!r} does not exist")
    with open(path, "r") as f:
        return parse_spdcsv(f.read())


def save_dataset(dataset, path):
    with open(path, "w") as f:
        f.write(format_spdcsv(dataset))
    return path


def symmetric_noise(rng, n, scale, size=None):
    shape = (n, n) if size is None else (size, n, n)
    A = rng.standard_normal(shape)
    return scale * (A + matfun.transpose(A)) / np.sqrt(2.0)


def synth_prototypes(metric, n, num_classes, separation, rng):
    eye = np.eye(n)
    for _ in range(constants.SYNTH_MAX_RETRIES):
        directions = symmetric_noise(rng, n, 1.0, num_classes)
        chart_norms = matfun.frobenius_norm(
            metric.dphi(np.broadcast_to(eye, directions.shape), directions)
        )
        directions = directions / chart_norms[:, None, None]
        prototypes = metric.rie_exp(np.broadcast_to(eye, directions.shape), directions)
        charts = metric.phi(prototypes)
        gaps = matfun.frobenius_norm(charts[:, None] - charts[None, :])
        if np.all(gaps[np.triu_indices(num_classes, 1)] >= separation):
            return prototypes
    raise GenerationError(
        f"could not place {num_classes} prototypes at chart distance >= {separation:g} after "
        f"{constants.SYNTH_MAX_RETRIES} attempts; use fewer classes, a larger n or a smaller spread"
    )


def synth_generate(n, num_classes, per_class, spread, metric=None, seed=0):
    """
    Seeded synthetic classification set: class prototypes ``rie_exp(I, M_c)`` with unit
    chart norm, and samples ``rie_exp(P_c, xi)`` with symmetric Gaussian ``xi`` of entry
    scale ``spread / sqrt(n)``, all under ``metric`` (default LEM(1, 0)).
    """
    if n < 2 or num_classes < 2 or per_class < 1:
        raise ValidationError(
            f"need n >= 2, classes >= 2, per_class >= 1; got {n}, {num_classes}, {per_class}"
        )
    if spread <= 0:
        raise ValidationError(f"spread must be > 0, got {spread}")
    metric = make_metric(metric or MetricSpec.lem())
    metric.spec.validate(n)
    rng = make_rng(seed)
    prototypes = synth_prototypes(metric, n, num_classes, 4.0 * spread, rng)
    labels = np.repeat(np.arange(num_classes), per_class)
    noise = symmetric_noise(rng, n, spread / np.sqrt(n), labels.size)
    samples = matfun.symmetrize(metric.rie_exp(prototypes[labels], noise))
    order = rng.permutation(labels.size)
    return Dataset(samples[order], labels[order], num_classes, prototypes=prototypes)


def nearest_prototype(dataset, prototypes, metric):
    metric = make_metric(metric)
    charts = metric.phi(prototypes)
    distances = matfun.frobenius_norm(metric.phi(dataset.samples)[:, None] - charts[None])
    return np.argmin(distances, axis=1)


class DatasetManager:
    """
    Load, save and synthesize datasets for the CLI.
    """

    def __init__(self, config=None):
        self.config = config or Config()
        self.log = Logger(self.__class__.__name__, self.config)

    def load(self, path, format=constants.SPDCSV_FORMAT):
        self.log.debug(f"Loading dataset from {path} ({format})")
        try:
            dataset = load_dataset(path, format)
        except (SpdMlrError, FileNotFoundError) as e:
            self.log.error(f"Failed loading dataset {path}: {e}")
            return False, e, f"Could not load dataset {path}: {e}"
        message = f"Loaded {dataset.size} samples of dimension {dataset.dim} in {dataset.num_classes} classes"
        self.log.info(message)
        return True, dataset, message

    def save(self, dataset, path):
        try:
            save_dataset(dataset, path)
        except OSError as e:
            return False, e, f"Could not write dataset {path}: {e}"
        return True, path, f"Wrote {dataset.size} samples to {path}"

    def synth(self, n, num_classes, per_class, spread, metric=None, seed=0):
        self.log.debug(
            f"Generating synthetic dataset: n={n}, classes={num_classes}, per_class={per_class}, spread={spread}, seed={seed}"
        )
        try:
            dataset = synth_generate(n, num_classes, per_class, spread, metric, seed)
        except SpdMlrError as e:
            self.log.error(f"Synthetic generation failed: {e}")
            return False, e, str(e)
        return True, dataset, f"Generated {dataset.size} samples of dimension {n} in {num_classes} classes"

    def resolve(self, source, format=constants.SPDCSV_FORMAT):
        """A dataset from a file path, or from the ``synth`` config section when ``source`` is ``synth``."""
        if source == constants.SYNTH_DATA_SOURCE:
            n = self.config.get("synth.n") or self.config.get("widths")[0]
            seed = self.config.get("synth.seed")
            return self.synth(
                int(n),
                int(self.config.get("synth.classes")),
                int(self.config.get("synth.per_class")),
                float(self.config.get("synth.spread")),
                seed=self.config.get("seed") if seed is None else int(seed),
            )
        return self.load(source, format)
