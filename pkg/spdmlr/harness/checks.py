"""
Self-checks run from the command line: a finite-difference gradient check of
the whole network and the lockstep comparison of an LEM SPD MLR head with its
LogEig counterpart.
"""

from dataclasses import dataclass, field

import numpy as np

import spdmlr.core.constants as constants
from spdmlr.core.error import ConfigurationError, DimensionError
from spdmlr.core.util import make_rng
from spdmlr.geometry import matfun
from spdmlr.geometry.metrics import MetricSpec, make_metric
from spdmlr.models.classifier import LOGEIG_POINT, LogEigHead, MlrHead, logeig_from_lem
from spdmlr.models.network import NetworkConfig, SpdNet, cross_entropy
from spdmlr.optim.riemannian import rsgd_step_pem

GRADCHECK_WIDTHS = (10, 8, 5)
GRADCHECK_CLASSES = 3
GRADCHECK_BATCH = 4


def random_spd(rng, n, size=None, condition=10.0):
    """Random SPD matrices with eigenvalues spread log-uniformly over ``[1, condition]``."""
    shape = (n, n) if size is None else (size, n, n)
    Q, _ = np.linalg.qr(rng.standard_normal(shape))
    values = np.exp(rng.uniform(0.0, np.log(condition), shape[:-1]))
    return matfun.symmetrize(matfun.assemble(Q, values))


def relative_error(analytic, numeric, floor=constants.GRADCHECK_FLOOR):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


@dataclass
class GradcheckEntry:
    head: str
    param: str
    analytic: float
    numeric: float
    rel_error: float

    @property
    def passed(self):
        return self.rel_error < constants.GRADCHECK_TOLERANCE


@dataclass
class GradcheckReport:
    entries: list = field(default_factory=list)

    @property
    def passed(self):
        return all(entry.passed for entry in self.entries)

    @property
    def failures(self):
        return [entry for entry in self.entries if not entry.passed]

    def max_errors(self):
        errors = {}
        for entry in self.entries:
            key = f"{entry.head}:{entry.param}"
            errors[key] = max(errors.get(key, 0.0), entry.rel_error)
        return errors

    def heads(self):
        return sorted({entry.head for entry in self.entries})

    def rows(self):
        return [
            (
                entry.head,
                entry.param,
                f"{entry.analytic:.6e}",
                f"{entry.numeric:.6e}",
                f"{entry.rel_error:.2e}",
            )
            for entry in self.entries
        ]


def clamping_threshold(network, samples):
    """
    A ReEig threshold inside the largest spectral gap of the first BiMap output,
    so some eigenvalues are clamped while none sits near the kink.
    """
    W = network.params["bimap.0"]
    X = matfun.symmetrize(W @ samples @ W.T)
    values = np.sort(np.linalg.eigvalsh(X).ravel())
    lower = values[: max(values.size // 2, 2)]
    gaps = np.diff(lower)
    i = int(np.argmax(gaps))
    return float(0.5 * (lower[i] + lower[i + 1]))


def gradcheck_networks(seed, widths=GRADCHECK_WIDTHS):
    """One network per head kind, with non-trivial shifts and a clamping ReEig."""
    rng = make_rng(seed)
    samples = random_spd(rng, widths[0], GRADCHECK_BATCH)
    labels = rng.integers(0, GRADCHECK_CLASSES, GRADCHECK_BATCH)
    heads = [
        (constants.HEAD_LOGEIG, None),
        (constants.METRIC_LEM, MetricSpec.lem(1.0, 0.5)),
        (constants.METRIC_LCM, MetricSpec.lcm(0.5)),
    ]
    networks = []
    for head, metric in heads:
        config = NetworkConfig(widths, GRADCHECK_CLASSES, head=head, metric=metric, seed=seed)
        network = SpdNet(config)
        eps = clamping_threshold(network, samples)
        config = NetworkConfig(
            widths, GRADCHECK_CLASSES, head=head, metric=metric, reeig_eps=eps, seed=seed
        )
        network = SpdNet(config, network.params)
        if metric is not None:
            n = widths[-1]
            shifts = random_spd(rng, n, GRADCHECK_CLASSES, condition=3.0)
            network.update_params({"head.shifts": shifts})
        else:
            network.update_params({"head.biases": rng.standard_normal(GRADCHECK_CLASSES)})
        networks.append((head, network))
    return networks, samples, labels


def network_loss(network, samples, labels):
    logits, _ = network.forward(samples, record=False)
    return cross_entropy(logits, labels, reduction="sum")[0]


def perturbation(rng, name, param):
    if name.startswith("head.shifts") or name.startswith("head.normals"):
        return matfun.symmetrize(rng.standard_normal(param.shape))
    return rng.standard_normal(param.shape)


def check_network(head, network, samples, labels, rng, step, corrupt=None):
    entries = []
    _, grads, _ = network.loss_and_grads(samples, labels, reduction="sum")
    logits, tape = network.forward(samples)
    _, grad_logits = cross_entropy(logits, labels, reduction="sum")
    grads["input"] = network.backward(tape, grad_logits)["input"]
    base_params = {name: value.copy() for name, value in network.params.items()}
    for name in sorted(grads):
        direction = perturbation(rng, name, samples if name == "input" else base_params[name])
        if name == "input":
            direction = matfun.symmetrize(direction)
            plus = network_loss(network, samples + step * direction, labels)
            minus = network_loss(network, samples - step * direction, labels)
        else:
            network.update_params({name: base_params[name] + step * direction})
            plus = network_loss(network, samples, labels)
            network.update_params({name: base_params[name] - step * direction})
            minus = network_loss(network, samples, labels)
            network.update_params({name: base_params[name]})
        analytic = float(np.sum(grads[name] * direction))
        if corrupt == name:
            analytic *= 1.5
        numeric = (plus - minus) / (2.0 * step)
        entries.append(
            GradcheckEntry(head, name, analytic, numeric, relative_error(analytic, numeric))
        )
    return entries


def gradcheck(seed=0, widths=GRADCHECK_WIDTHS, step=constants.GRADCHECK_STEP, corrupt=None):
    """
    Compare analytic gradients with central differences along random directions
    for every parameter kind of a LogEig, an LEM and an LCM network.

    :param corrupt: parameter name whose analytic gradient is deliberately scaled
    """
    if max(widths) > constants.GRADCHECK_MAX_DIM:
        raise DimensionError(
            f"gradcheck is limited to n <= {constants.GRADCHECK_MAX_DIM}, got {list(widths)}"
        )
    networks, samples, labels = gradcheck_networks(seed, widths)
    rng = make_rng(seed + 1)
    report = GradcheckReport()
    for head, network in networks:
        report.entries.extend(check_network(head, network, samples, labels, rng, step, corrupt))
    return report


@dataclass
class EquivalenceReport:
    metric: str
    spd_losses: list = field(default_factory=list)
    logeig_losses: list = field(default_factory=list)

    @property
    def gaps(self):
        return [abs(a - b) for a, b in zip(self.spd_losses, self.logeig_losses)]

    @property
    def max_gap(self):
        return max(self.gaps) if self.gaps else 0.0


def equivalence_problem(seed, n=4, num_classes=3, size=30):
    rng = make_rng(seed)
    samples = random_spd(rng, n, size, condition=20.0)
    labels = np.arange(size) % num_classes
    shifts = random_spd(rng, n, num_classes, condition=5.0)
    normals = matfun.symmetrize(rng.standard_normal((num_classes, n, n)))
    return samples, labels, shifts, normals


def equivalence_check(steps=100, seed=0, metric=None, lr=0.1):
    """
    Train an SPD MLR head with PEM Riemannian SGD (shifts) and Euclidean SGD
    (normals), and a point-parameterized LogEig head with Euclidean SGD, in
    lockstep on one full batch. Both start from the chart correspondence
    ``p_k = vec(mlog P_k)``, ``a_k = vec(A_k)``; the losses agree at every step
    only under LEM(1, 0).
    """
    if steps < 0:
        raise ConfigurationError(f"steps must be >= 0, got {steps}")
    metric = metric or MetricSpec.lem()
    samples, labels, shifts, normals = equivalence_problem(seed)
    lem_head = MlrHead(MetricSpec.lem(), shifts, normals)
    logeig = logeig_from_lem(lem_head, LOGEIG_POINT)
    weights, points = logeig.weights, logeig.points
    tangent = matfun.mlog(samples)
    report = EquivalenceReport(metric=str(metric))
    pem = make_metric(metric)
    for step in range(steps + 1):
        head = MlrHead(metric, shifts, normals)
        spd_loss, grad_logits = cross_entropy(head.logits(samples), labels)
        logeig = LogEigHead(weights, points=points, parameterization=LOGEIG_POINT)
        logeig_loss, logeig_grad_logits = cross_entropy(logeig.logits(tangent), labels)
        report.spd_losses.append(spd_loss)
        report.logeig_losses.append(logeig_loss)
        if step == steps:
            break
        _, grads = head.backward(samples, grad_logits)
        shifts = rsgd_step_pem(pem, shifts, grads["shifts"], lr)
        normals = normals - lr * grads["normals"]
        _, logeig_grads = logeig.backward(tangent, logeig_grad_logits)
        weights = weights - lr * logeig_grads["weights"]
        points = points - lr * logeig_grads["points"]
    return report
