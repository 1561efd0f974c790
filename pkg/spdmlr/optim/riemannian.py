"""
Parameter updates that respect each parameter's geometry.

Rules:

* ``pem``: Riemannian SGD under a pullback Euclidean metric, for SPD shifts.
* ``aim``: affine-invariant exponential step, for SPD shifts.
* ``stiefel``: tangent projection and QR retraction, for BiMap weights.
* ``euclidean``: plain steps, for normals and LogEig weights.

Any rule can be wrapped by Riemannian AMSGrad, whose first moment is carried
to the new base point after each step.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

import spdmlr.core.constants as constants
from spdmlr.core.error import ConfigurationError, ContractViolationError, DomainError
from spdmlr.core.logger import Logger
from spdmlr.geometry import matfun
from spdmlr.geometry.metrics import MetricSpec, make_metric

PARAM_RULES = [
    constants.RULE_PEM,
    constants.RULE_AIM,
    constants.RULE_EUCLIDEAN,
    constants.RULE_STIEFEL,
]


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float
    shift_rule: str = constants.RULE_AIM
    metric: Optional[MetricSpec] = None
    amsgrad: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigurationError(f"learning rate must be >= 0, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0 <= value < 1:
                raise ConfigurationError(f"{name} must be in [0, 1), got {value}")
        if self.eps <= 0:
            raise ConfigurationError(f"eps must be > 0, got {self.eps}")
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.shift_rule not in constants.SHIFT_RULES:
            raise ConfigurationError(
                f"SPD parameters are updated with one of {', '.join(constants.SHIFT_RULES)}, got {self.shift_rule!r}"
            )
        if self.shift_rule == constants.RULE_PEM and self.metric is None:
            raise ConfigurationError("the pem rule needs a metric")

    @classmethod
    def from_config(cls, config, metric=None):
        rule = config.get("optimizer.rule")
        if rule == constants.RULE_PEM and metric is None:
            # A LogEig network has no SPD parameters; keep the rule valid anyway.
            metric = MetricSpec.lem()
        return cls(
            learning_rate=float(config.get("lr")),
            shift_rule=rule,
            metric=metric,
            amsgrad=bool(config.get("optimizer.amsgrad")),
            beta1=float(config.get("optimizer.beta1")),
            beta2=float(config.get("optimizer.beta2")),
            eps=float(config.get("optimizer.eps")),
            weight_decay=float(config.get("weight_decay")),
        )


@dataclass
class ParamState:
    momentum: np.ndarray
    max_second: np.ndarray
    second: np.ndarray
    steps: int = 0

    @classmethod
    def zeros_like(cls, param):
        return cls(np.zeros_like(param), np.zeros_like(param), np.zeros_like(param))


@dataclass
class OptimizerState:
    params: dict = field(default_factory=dict)

    def get(self, name, param):
        state = self.params.get(name)
        if state is None:
            state = self.params[name] = ParamState.zeros_like(param)
        elif state.momentum.shape != np.shape(param):
            raise ContractViolationError(
                f"optimizer state for {name!r} has shape {state.momentum.shape}, parameter has {np.shape(param)}"
            )
        return state


def check_step_size(lr):
    if lr < 0:
        raise DomainError(f"step size must be >= 0, got {lr}")


def pem_project(metric, P, euclid_grad):
    return make_metric(metric).project_gradient(P, euclid_grad)


def rsgd_step_pem(metric, P, euclid_grad, lr):
    check_step_size(lr)
    metric = make_metric(metric)
    return metric.rie_exp(P, -lr * metric.project_gradient(P, euclid_grad))


def aim_riemannian_grad(P, euclid_grad):
    P = matfun.as_symmetric(P)
    return P @ matfun.symmetrize(euclid_grad) @ P


def aim_exp(P, V):
    root = matfun.mpow(P, 0.5)
    inv_root = matfun.mpow(P, -0.5)
    return matfun.symmetrize(root @ matfun.mexp(inv_root @ matfun.symmetrize(V) @ inv_root) @ root)


def aim_transport(P, Q, V):
    """Affine-invariant parallel transport ``E V E^T`` with ``E = (Q P^{-1})^{1/2}``."""
    root = matfun.mpow(P, 0.5)
    inv_root = matfun.mpow(P, -0.5)
    E = root @ matfun.mpow(inv_root @ matfun.as_symmetric(Q) @ inv_root, 0.5) @ inv_root
    return matfun.symmetrize(E @ matfun.as_symmetric(V) @ matfun.transpose(E))


def rsgd_step_aim(P, euclid_grad, lr):
    check_step_size(lr)
    return aim_exp(P, -lr * aim_riemannian_grad(P, euclid_grad))


def stiefel_project(W, G):
    """Tangent projection at a row semi-orthogonal ``W``: ``G - sym(G W^T) W``."""
    W = np.asarray(W, dtype=float)
    G = np.asarray(G, dtype=float)
    return G - matfun.symmetrize(G @ W.T) @ W


def stiefel_retract(W, V):
    """
    Orthonormalize the rows of ``W + V`` by QR with a positive diagonal in R;
    falls back to the polar factor when ``R`` is numerically rank deficient.
    """
    A = (np.asarray(W, dtype=float) + np.asarray(V, dtype=float)).T
    Q, R = np.linalg.qr(A)
    diag = np.diagonal(R)
    if np.min(np.abs(diag)) <= constants.RETRACTION_RANK_TOLERANCE * max(np.max(np.abs(diag)), 1.0):
        U, _, Vt = np.linalg.svd(A, full_matrices=False)
        return (U @ Vt).T
    return (Q * np.where(diag < 0, -1.0, 1.0)).T


def stiefel_step(W, euclid_grad, lr):
    check_step_size(lr)
    return stiefel_retract(W, -lr * stiefel_project(W, euclid_grad))


class Optimizer:
    """
    Applies one update per named parameter, dispatching on the parameter's rule.

    :param config: OptimizerConfig
    :param rules: mapping of parameter name to rule
    :param decayed: names that get weight decay, by default every Euclidean parameter
    """

    def __init__(self, config, rules, log_config=None, decayed=None):
        self.config = config
        self.rules = dict(rules)
        for name, rule in self.rules.items():
            if rule not in PARAM_RULES:
                raise ConfigurationError(f"unknown update rule {rule!r} for {name!r}")
        euclidean = {name for name, rule in self.rules.items() if rule == constants.RULE_EUCLIDEAN}
        # Decay only ever touches Euclidean parameters.
        self.decayed = euclidean if decayed is None else set(decayed)
        if not self.decayed <= euclidean:
            raise ConfigurationError(
                f"weight decay needs Euclidean parameters, got {sorted(self.decayed - euclidean)}"
            )
        self.metric = make_metric(config.metric) if config.metric is not None else None
        self.state = OptimizerState()
        self.log = Logger(self.__class__.__name__, log_config)

    def riemannian_grad(self, rule, param, grad):
        if rule == constants.RULE_PEM:
            return self.metric.project_gradient(param, grad)
        if rule == constants.RULE_AIM:
            return aim_riemannian_grad(param, grad)
        if rule == constants.RULE_STIEFEL:
            return stiefel_project(param, grad)
        return grad

    def move(self, rule, param, direction):
        if rule == constants.RULE_PEM:
            return self.metric.rie_exp(param, direction)
        if rule == constants.RULE_AIM:
            return aim_exp(param, direction)
        if rule == constants.RULE_STIEFEL:
            return stiefel_retract(param, direction)
        return param + direction

    def transport(self, rule, old, new, vector):
        if rule == constants.RULE_PEM:
            return self.metric.parallel_transport(old, new, vector)
        if rule == constants.RULE_AIM:
            return aim_transport(old, new, vector)
        if rule == constants.RULE_STIEFEL:
            return stiefel_project(new, vector)
        return vector

    def sgd_step(self, rule, param, grad, lr):
        check_step_size(lr)
        return self.move(rule, param, -lr * self.riemannian_grad(rule, param, grad))

    def amsgrad_step(self, state, rule, param, grad, lr):
        check_step_size(lr)
        c = self.config
        rgrad = self.riemannian_grad(rule, param, grad)
        state.momentum = c.beta1 * state.momentum + (1.0 - c.beta1) * rgrad
        state.second = c.beta2 * state.second + (1.0 - c.beta2) * rgrad**2
        state.max_second = np.maximum(state.max_second, state.second)
        direction = -lr * state.momentum / (np.sqrt(state.max_second) + c.eps)
        updated = self.move(rule, param, direction)
        state.momentum = self.transport(rule, param, updated, state.momentum)
        state.steps += 1
        return updated

    def step(self, params, grads, lr=None):
        """Return updated copies of ``params``; parameters without a gradient are left alone."""
        lr = self.config.learning_rate if lr is None else lr
        check_step_size(lr)
        updated = dict(params)
        if lr == 0:
            # A frozen run: exp/retract round trips would still perturb the last bits.
            return updated
        self.log.debug(f"Updating {len(grads)} parameters with step size {lr:g}")
        for name, grad in grads.items():
            if name not in self.rules:
                raise ContractViolationError(f"no update rule registered for parameter {name!r}")
            rule = self.rules[name]
            param = params[name]
            if np.shape(grad) != np.shape(param):
                raise ContractViolationError(
                    f"gradient for {name!r} has shape {np.shape(grad)}, parameter has {np.shape(param)}"
                )
            if name in self.decayed and self.config.weight_decay:
                grad = grad + self.config.weight_decay * param
            if self.config.amsgrad:
                updated[name] = self.amsgrad_step(
                    self.state.get(name, param), rule, param, grad, lr
                )
            else:
                updated[name] = self.sgd_step(rule, param, grad, lr)
        return updated


def amsgrad_step(state, rule, param, euclid_grad, lr, config):
    """Functional form of one Riemannian AMSGrad update; ``state`` is a ParamState."""
    if state.momentum.shape != np.shape(param):
        raise ContractViolationError(
            f"optimizer state of shape {state.momentum.shape} does not match parameter {np.shape(param)}"
        )
    optimizer = Optimizer(config, {"param": rule})
    return optimizer.amsgrad_step(state, rule, param, euclid_grad, lr), state
