"""
SPDNet layer stack: BiMap, ReEig and LogEig layers followed by a classifier
head, with a forward pass that records a tape and an analytic backward pass.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

import spdmlr.core.constants as constants
from spdmlr.core.error import (
    ConfigurationError,
    ContractViolationError,
    DimensionError,
    DomainError,
    SpdMlrError,
)
from spdmlr.core.util import make_rng
from spdmlr.geometry import matfun
from spdmlr.geometry.metrics import MetricSpec
from spdmlr.models.classifier import LogEigHead, MlrHead

BIMAP = "bimap"
REEIG = "reeig"
LOGEIG = "logeig"
HEAD = "head"
LAYER_KINDS = [
    BIMAP,
    REEIG,
    LOGEIG,
    HEAD,
]

HEAD_PREFIX = "head."
DECAYED_PARAMS = ("head.normals", "head.weights")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_dim: int
    out_dim: int
    eps: Optional[float] = None
    index: Optional[int] = None

    def __str__(self):
        if self.kind == BIMAP:
            return f"BiMap({self.in_dim}->{self.out_dim})"
        if self.kind == REEIG:
            return f"ReEig(eps={self.eps:g})"
        if self.kind == LOGEIG:
            return "LogEig"
        return "Head"


@dataclass(frozen=True)
class NetworkConfig:
    widths: tuple
    num_classes: int
    head: str = constants.METRIC_LEM
    metric: Optional[MetricSpec] = None
    reeig_eps: float = 1e-4
    final_reeig: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(width) for width in self.widths))
        self.validate()

    @classmethod
    def from_config(cls, config, num_classes, seed=None):
        head = config.get("metric.kind")
        metric = None if head == constants.HEAD_LOGEIG else MetricSpec.from_config(config)
        return cls(
            widths=config.get("widths"),
            num_classes=num_classes,
            head=head,
            metric=metric,
            reeig_eps=config.get("reeig_eps"),
            final_reeig=bool(config.get("network.final_reeig")),
            seed=config.get("seed") if seed is None else seed,
        )

    def validate(self):
        if len(self.widths) < 1 or any(width < 1 for width in self.widths):
            raise ConfigurationError(f"widths must be positive, got {list(self.widths)}")
        if any(later > earlier for earlier, later in zip(self.widths, self.widths[1:])):
            raise ConfigurationError(
                f"BiMap widths must be non-increasing, got {list(self.widths)}"
            )
        if self.widths[0] > constants.MAX_MATRIX_DIM:
            raise DimensionError(
                f"input dimension {self.widths[0]} exceeds {constants.MAX_MATRIX_DIM}"
            )
        if self.reeig_eps <= 0:
            raise ConfigurationError(f"reeig_eps must be > 0, got {self.reeig_eps}")
        if self.num_classes < 2:
            raise ConfigurationError(f"at least 2 classes are required, got {self.num_classes}")
        if self.head not in constants.HEAD_KINDS:
            raise ConfigurationError(f"unknown head {self.head!r}")
        if self.head != constants.HEAD_LOGEIG:
            if self.metric is None or self.metric.kind != self.head:
                raise ConfigurationError(
                    f"head {self.head!r} needs a matching metric, got {self.metric}"
                )
            self.metric.validate(self.widths[-1])
        return True

    @property
    def input_dim(self):
        return self.widths[0]

    @property
    def output_dim(self):
        return self.widths[-1]

    def layer_specs(self):
        """
        Layers in order. ReEig follows every BiMap except the last one unless
        ``final_reeig`` is set; LogEig only precedes a LogEig head.
        """
        specs = []
        bimaps = len(self.widths) - 1
        for i, (d_in, d_out) in enumerate(zip(self.widths, self.widths[1:])):
            specs.append(LayerSpec(BIMAP, d_in, d_out, index=i))
            if i < bimaps - 1 or self.final_reeig:
                specs.append(LayerSpec(REEIG, d_out, d_out, eps=self.reeig_eps))
        if self.head == constants.HEAD_LOGEIG:
            specs.append(LayerSpec(LOGEIG, self.output_dim, self.output_dim))
        specs.append(LayerSpec(HEAD, self.output_dim, self.num_classes))
        return specs


def bimap_forward(W, S):
    W = np.asarray(W, dtype=float)
    S = matfun.as_symmetric(S)
    if W.ndim != 2 or W.shape[1] != S.shape[-1] or W.shape[0] > W.shape[1]:
        raise DimensionError(f"BiMap weight {W.shape} does not fit input {S.shape}")
    return matfun.symmetrize(W @ S @ W.T)


def bimap_backward(W, S, grad_out):
    G = matfun.symmetrize(grad_out)
    grad_in = W.T @ G @ W
    grad_W = 2.0 * np.sum(G @ W @ S, axis=tuple(range(G.ndim - 2)))
    return grad_in, grad_W


def reeig_functions(eps):
    return (lambda x: np.maximum(x, eps)), (lambda x: (x > eps).astype(float))


def reeig_forward(eps, S):
    if eps <= 0:
        raise DomainError(f"ReEig threshold must be > 0, got {eps}")
    return reeig_with_eig(eps, S)[0]


def reeig_with_eig(eps, S):
    pair = matfun.sym_eig(S)
    clamp, _ = reeig_functions(eps)
    return matfun.assemble(pair.vectors, clamp(pair.values)), pair


def reeig_backward(eps, pair, grad_out):
    clamp, step = reeig_functions(eps)
    lam = matfun.loewner_matrix(pair.values, clamp, step)
    return matfun.daleckii_krein(pair.vectors, lam, matfun.symmetrize(grad_out))


def logeig_forward(S):
    return matfun.mlog(S)


def logeig_with_eig(S):
    pair = matfun.spd_eig(S)
    return matfun.assemble(pair.vectors, np.log(pair.values)), pair


def logeig_backward(pair, grad_out):
    lam = matfun.loewner_matrix(pair.values, np.log, np.reciprocal)
    return matfun.daleckii_krein(pair.vectors, lam, matfun.symmetrize(grad_out))


def cross_entropy(logits, labels, reduction="mean"):
    """
    Softmax cross-entropy with its gradient with respect to the logits.

    Accepts ``(C,)`` logits with an integer label or ``(B, C)`` logits with a
    label vector. ``reduction`` is ``mean`` or ``sum`` over the batch.
    """
    logits = np.asarray(logits, dtype=float)
    single = logits.ndim == 1
    logits = np.atleast_2d(logits)
    labels = np.atleast_1d(np.asarray(labels))
    num_classes = logits.shape[-1]
    if labels.shape != (logits.shape[0],):
        raise DimensionError(f"expected {logits.shape[0]} labels, got {labels.shape}")
    integral = np.all(labels == np.floor(labels))
    if np.any(labels < 0) or np.any(labels >= num_classes) or not integral:
        raise DomainError(f"labels must be integers in [0, {num_classes}), got {labels.tolist()}")
    labels = labels.astype(int)
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=-1))
    rows = np.arange(logits.shape[0])
    losses = log_norm - shifted[rows, labels]
    grad = np.exp(shifted - log_norm[:, None])
    grad[rows, labels] -= 1.0
    if reduction == "mean":
        loss, grad = np.mean(losses), grad / logits.shape[0]
    elif reduction == "sum":
        loss = np.sum(losses)
    else:
        raise ConfigurationError(f"unknown reduction {reduction!r}")
    return float(loss), (grad[0] if single else grad)


def semi_orthogonal(rng, out_dim, in_dim):
    Q, R = np.linalg.qr(rng.standard_normal((in_dim, out_dim)))
    Q = Q * np.where(np.diagonal(R) < 0, -1.0, 1.0)
    return Q.T


def init_params(config):
    """
    Seeded initial parameters: orthogonal-factor BiMap weights, identity shifts,
    Gaussian symmetric normals scaled by ``1/n``; LogEig weights scaled by ``1/n^2``.
    """
    rng = make_rng(config.seed)
    params = {}
    for spec in config.layer_specs():
        if spec.kind == BIMAP:
            params[f"{BIMAP}.{spec.index}"] = semi_orthogonal(rng, spec.out_dim, spec.in_dim)
    n, C = config.output_dim, config.num_classes
    if config.head == constants.HEAD_LOGEIG:
        params["head.weights"] = rng.standard_normal((C, n * n)) / n**2
        params["head.biases"] = np.zeros(C)
    else:
        params["head.shifts"] = np.broadcast_to(np.eye(n), (C, n, n)).copy()
        params["head.normals"] = matfun.symmetrize(rng.standard_normal((C, n, n))) / n
    return params


def build_head(config, params):
    head_params = {
        name[len(HEAD_PREFIX) :]: value
        for name, value in params.items()
        if name.startswith(HEAD_PREFIX)
    }
    if config.head == constants.HEAD_LOGEIG:
        if "points" in head_params:
            return LogEigHead(
                head_params["weights"], points=head_params["points"], parameterization="point"
            )
        return LogEigHead(head_params["weights"], biases=head_params.get("biases"))
    return MlrHead(config.metric, head_params["shifts"], head_params["normals"])


@dataclass
class LayerCache:
    spec: LayerSpec
    input: np.ndarray
    eig: Optional[matfun.EigenPair] = None


@dataclass
class NetworkTape:
    network: "SpdNet"
    forward_id: int
    params_version: int
    caches: list = field(default_factory=list)
    head_input: Optional[np.ndarray] = None


class SpdNet:
    """
    A configured network over a named parameter dictionary.

    Parameter names are ``bimap.<i>`` for BiMap weights and ``head.<name>`` for
    head parameters.
    """

    def __init__(self, config, params=None):
        self.config = config
        self.specs = config.layer_specs()
        initial = params or init_params(config)
        self.params = {name: np.array(value, dtype=float) for name, value in initial.items()}
        self.params_version = 0
        self.forward_id = 0
        self.check_params()

    def check_params(self):
        for spec in self.specs:
            if spec.kind == BIMAP:
                W = self.params.get(f"{BIMAP}.{spec.index}")
                if W is None or W.shape != (spec.out_dim, spec.in_dim):
                    raise DimensionError(
                        f"parameter {BIMAP}.{spec.index} must have shape {(spec.out_dim, spec.in_dim)}"
                    )
        build_head(self.config, self.params)

    def update_params(self, params):
        self.params.update({name: np.array(value, dtype=float) for name, value in params.items()})
        self.params_version += 1

    def param_rules(self, shift_rule=constants.RULE_AIM):
        rules = {}
        for name in self.params:
            if name.startswith(BIMAP):
                rules[name] = constants.RULE_STIEFEL
            elif name == "head.shifts":
                rules[name] = shift_rule
            else:
                rules[name] = constants.RULE_EUCLIDEAN
        return rules

    def decayed_params(self):
        """Normals and LogEig weights; biases, points and manifold parameters are not decayed."""
        return [name for name in self.params if name in DECAYED_PARAMS]

    def forward(self, S, record=True):
        """
        Logits for ``S`` and the tape of this pass.

        With ``record=False`` the tape is not registered as the latest pass, so
        concurrent inference never invalidates a training tape.
        """
        S = matfun.as_symmetric(S)
        if S.shape[-1] != self.config.input_dim:
            raise DimensionError(
                f"network expects {self.config.input_dim}x{self.config.input_dim} inputs, got {S.shape}"
            )
        if record:
            self.forward_id += 1
        tape = NetworkTape(self, self.forward_id if record else -1, self.params_version)
        head = build_head(self.config, self.params)
        X = S
        for position, spec in enumerate(self.specs):
            try:
                if spec.kind == BIMAP:
                    tape.caches.append(LayerCache(spec, X))
                    X = bimap_forward(self.params[f"{BIMAP}.{spec.index}"], X)
                elif spec.kind == REEIG:
                    Y, pair = reeig_with_eig(spec.eps, X)
                    tape.caches.append(LayerCache(spec, X, pair))
                    X = Y
                elif spec.kind == LOGEIG:
                    Y, pair = logeig_with_eig(X)
                    tape.caches.append(LayerCache(spec, X, pair))
                    X = Y
                else:
                    tape.head_input = X
                    X = head.logits(X)
            except SpdMlrError as e:
                e.layer_index = position
                e.args = (f"layer {position} ({spec}): {e}",)
                raise
        return X, tape

    def backward(self, tape, grad_logits):
        if (
            tape.network is not self
            or tape.forward_id != self.forward_id
            or tape.params_version != self.params_version
        ):
            raise ContractViolationError(
                "gradient tape is stale: it does not match the latest forward pass"
            )
        g = np.asarray(grad_logits, dtype=float)
        single = g.ndim == 1
        head_input = tape.head_input
        if single:
            g = g[None]
            head_input = head_input[None]
        head = build_head(self.config, self.params)
        grad_X, head_grads = head.backward(head_input, g)
        if single:
            grad_X = grad_X[0]
        grads = {f"{HEAD_PREFIX}{name}": value for name, value in head_grads.items()}
        for cache in reversed(tape.caches):
            spec = cache.spec
            if spec.kind == BIMAP:
                name = f"{BIMAP}.{spec.index}"
                grad_X, grads[name] = bimap_backward(self.params[name], cache.input, grad_X)
            elif spec.kind == REEIG:
                grad_X = reeig_backward(spec.eps, cache.eig, grad_X)
            else:
                grad_X = logeig_backward(cache.eig, grad_X)
        grads["input"] = grad_X
        return grads

    def loss_and_grads(self, S, labels, reduction="mean"):
        logits, tape = self.forward(S)
        loss, grad_logits = cross_entropy(logits, labels, reduction)
        grads = self.backward(tape, grad_logits)
        grads.pop("input")
        return loss, grads, logits

    def logits(self, S):
        return self.forward(S, record=False)[0]

    def predict(self, S):
        return np.argmax(self.logits(S), axis=-1)


def network_forward(config, params, S):
    return SpdNet(config, params).forward(S)


def network_backward(tape, loss_grad):
    return tape.network.backward(tape, loss_grad)
