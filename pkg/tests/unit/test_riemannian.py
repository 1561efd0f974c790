import numpy as np
import pytest

import spdmlr.core.constants as constants
from spdmlr.core.error import ConfigurationError, ContractViolationError, DomainError
from spdmlr.geometry import matfun
from spdmlr.geometry.metrics import MetricSpec, make_metric
from spdmlr.harness.checks import random_spd
from spdmlr.optim.riemannian import (
    Optimizer,
    OptimizerConfig,
    ParamState,
    aim_riemannian_grad,
    aim_transport,
    amsgrad_step,
    pem_project,
    rsgd_step_aim,
    rsgd_step_pem,
    stiefel_project,
    stiefel_retract,
    stiefel_step,
)

from ..base import all_metric_specs, metric_ids, random_sym

LEM = MetricSpec.lem()
SPECS_3 = all_metric_specs(3)


def squared_distance_and_grad(metric, P, target):
    """``d(P, target)^2`` and its Euclidean gradient in ``P``."""
    metric = make_metric(metric)
    offset = metric.phi(P) - metric.phi(target)
    return float(matfun.inner(offset, offset)), metric.dphi_adjoint(P, 2.0 * offset)


def aim_inner(P, U, V):
    P_inv = np.linalg.inv(P)
    return np.trace(P_inv @ U @ P_inv @ V)


def test_pem_project_identity_base(rng):
    G = random_sym(rng, 3)
    np.testing.assert_allclose(pem_project(LEM, np.eye(3), G), G, atol=1e-13)


def test_pem_project_commuting_case():
    a, b = 2.0, 0.5
    G = np.diag([3.0, -1.0])
    np.testing.assert_allclose(
        pem_project(LEM, np.diag([a, b]), G), np.diag([a * a * 3.0, -b * b]), atol=1e-12
    )


@pytest.mark.parametrize("spec", SPECS_3, ids=metric_ids(SPECS_3))
def test_pem_project_defining_property(spec, rng):
    metric = make_metric(spec)
    for _ in range(10):
        P = random_spd(rng, 3)
        G, V = random_sym(rng, 3), random_sym(rng, 3)
        assert metric.metric_at(P, pem_project(spec, P, G), V) == pytest.approx(
            matfun.inner(G, V), rel=1e-8, abs=1e-12
        )


def test_pem_project_symmetrizes(rng):
    P = random_spd(rng, 3)
    G = rng.standard_normal((3, 3))
    np.testing.assert_allclose(pem_project(LEM, P, G), pem_project(LEM, P, matfun.symmetrize(G)))


@pytest.mark.parametrize("spec", [LEM, MetricSpec.lcm(0.5)], ids=str)
def test_rsgd_step_pem(spec, rng):
    P, target = random_spd(rng, 3), random_spd(rng, 3)
    np.testing.assert_allclose(rsgd_step_pem(spec, P, np.zeros((3, 3)), 0.1), P, rtol=1e-10)
    before, grad = squared_distance_and_grad(spec, P, target)
    after, _ = squared_distance_and_grad(spec, rsgd_step_pem(spec, P, grad, 1e-2), target)
    assert after < before


def test_rsgd_step_pem_is_a_chart_step(rng):
    metric = make_metric(LEM)
    for _ in range(10):
        P = random_spd(rng, 4)
        chart_grad = random_sym(rng, 4)
        euclid_grad = metric.dphi_adjoint(P, chart_grad)
        P_next = rsgd_step_pem(LEM, P, euclid_grad, 0.05)
        np.testing.assert_allclose(metric.phi(P_next), metric.phi(P) - 0.05 * chart_grad, atol=1e-9)


def test_step_size_must_be_nonnegative(rng):
    with pytest.raises(DomainError):
        rsgd_step_pem(LEM, np.eye(2), np.eye(2), -1.0)
    with pytest.raises(DomainError):
        rsgd_step_aim(np.eye(2), np.eye(2), -1.0)
    with pytest.raises(DomainError):
        stiefel_step(np.eye(2), np.eye(2), -1.0)


def test_rsgd_step_aim(rng):
    P = random_spd(rng, 3)
    np.testing.assert_allclose(rsgd_step_aim(P, np.zeros((3, 3)), 0.1), P, rtol=1e-10)
    G = rng.standard_normal((3, 3))
    np.testing.assert_allclose(
        rsgd_step_aim(np.eye(3), G, 0.1), matfun.mexp(-0.1 * matfun.symmetrize(G)), rtol=1e-12
    )
    log_P = matfun.mlog(P)
    grad = matfun.mat_fn_diff(P, matfun.LOG, 2.0 * log_P)
    P_next = rsgd_step_aim(P, grad, 1e-2)
    assert np.sum(matfun.mlog(P_next) ** 2) < np.sum(log_P**2)
    assert matfun.is_spd(P_next)


def test_aim_and_pem_steps_differ_by_gradient_gap(rng):
    P = random_spd(rng, 3)
    G = random_sym(rng, 3)
    gamma = 1e-6
    gap = (rsgd_step_aim(P, G, gamma) - rsgd_step_pem(LEM, P, G, gamma)) / gamma
    expected = -(aim_riemannian_grad(P, G) - pem_project(LEM, P, G))
    np.testing.assert_allclose(gap, expected, rtol=1e-3, atol=1e-6)
    np.testing.assert_allclose(
        rsgd_step_aim(np.eye(3), G, 0.1), rsgd_step_pem(LEM, np.eye(3), G, 0.1), atol=1e-12
    )


def test_aim_transport(rng):
    P, Q = random_spd(rng, 3), random_spd(rng, 3)
    U, V = random_sym(rng, 3), random_sym(rng, 3)
    np.testing.assert_allclose(aim_transport(P, P, V), V, atol=1e-10)
    assert aim_inner(Q, aim_transport(P, Q, U), aim_transport(P, Q, V)) == pytest.approx(
        aim_inner(P, U, V), rel=1e-8
    )


def test_stiefel_zero_gradient_keeps_point(rng):
    W = np.linalg.qr(rng.standard_normal((5, 3)))[0].T
    np.testing.assert_allclose(stiefel_step(W, np.zeros_like(W), 0.1), W, atol=1e-12)


def test_stiefel_steps_stay_on_manifold(rng):
    W = np.linalg.qr(rng.standard_normal((6, 4)))[0].T
    for _ in range(200):
        W = stiefel_step(W, rng.standard_normal(W.shape), 0.1)
        np.testing.assert_allclose(W @ W.T, np.eye(4), atol=1e-8)


def test_stiefel_projection_is_idempotent_and_tangent(rng):
    W = np.linalg.qr(rng.standard_normal((5, 3)))[0].T
    G = rng.standard_normal(W.shape)
    V = stiefel_project(W, G)
    np.testing.assert_allclose(stiefel_project(W, V), V, atol=1e-10)
    np.testing.assert_allclose(matfun.symmetrize(V @ W.T), 0.0, atol=1e-12)


def test_stiefel_retract_falls_back_on_rank_deficiency():
    W = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    V = np.array([[0.0, 0.0, 0.0], [-1.0, -1.0, 0.0]])
    R = stiefel_retract(W, V)
    np.testing.assert_allclose(R @ R.T, np.eye(2), atol=1e-10)


def test_optimizer_config_validation():
    with pytest.raises(ConfigurationError):
        OptimizerConfig(learning_rate=-1.0)
    with pytest.raises(ConfigurationError):
        OptimizerConfig(learning_rate=0.1, beta1=1.0)
    with pytest.raises(ConfigurationError):
        OptimizerConfig(learning_rate=0.1, shift_rule="newton")
    with pytest.raises(ConfigurationError):
        OptimizerConfig(learning_rate=0.1, shift_rule=constants.RULE_PEM)


def test_optimizer_config_from_config(test_config):
    test_config.set("optimizer.rule", "PEM")
    config = OptimizerConfig.from_config(test_config)
    assert config.shift_rule == constants.RULE_PEM
    assert config.metric == LEM
    assert config.learning_rate == pytest.approx(1e-2)


def test_amsgrad_zero_gradient_keeps_params(rng):
    P = random_spd(rng, 3)
    config = OptimizerConfig(learning_rate=0.1, shift_rule=constants.RULE_PEM, metric=LEM)
    state = ParamState.zeros_like(P)
    param = P
    for _ in range(5):
        param, state = amsgrad_step(state, constants.RULE_PEM, param, np.zeros_like(P), 0.1, config)
    np.testing.assert_allclose(param, P, rtol=1e-10)
    assert state.steps == 5


def test_amsgrad_euclidean_hand_computation(rng):
    config = OptimizerConfig(learning_rate=0.1, beta1=0.0, beta2=0.0, eps=1e-8)
    x = rng.standard_normal((2, 3))
    g = rng.standard_normal((2, 3))
    updated, state = amsgrad_step(
        ParamState.zeros_like(x), constants.RULE_EUCLIDEAN, x, g, 0.1, config
    )
    np.testing.assert_allclose(updated, x - 0.1 * g / (np.abs(g) + 1e-8))
    np.testing.assert_allclose(state.max_second, g**2)


def test_amsgrad_state_mismatch():
    config = OptimizerConfig(learning_rate=0.1)
    with pytest.raises(ContractViolationError):
        amsgrad_step(
            ParamState.zeros_like(np.zeros(3)),
            constants.RULE_EUCLIDEAN,
            np.zeros(4),
            np.ones(4),
            0.1,
            config,
        )


def test_amsgrad_converges_on_squared_distance(rng):
    target = random_spd(rng, 3, condition=2.0)
    config = OptimizerConfig(learning_rate=1e-2, shift_rule=constants.RULE_PEM, metric=LEM)
    optimizer = Optimizer(config, {"shift": constants.RULE_PEM})
    params = {"shift": np.eye(3)}
    for _ in range(500):
        _, grad = squared_distance_and_grad(LEM, params["shift"], target)
        params = optimizer.step(params, {"shift": grad})
        assert matfun.is_spd(params["shift"])
    assert make_metric(LEM).geodesic_dist(params["shift"], target) < 1e-4


def test_optimizer_zero_learning_rate_freezes(rng):
    params = {"w": rng.standard_normal(3), "P": random_spd(rng, 3)}
    optimizer = Optimizer(
        OptimizerConfig(learning_rate=0.0), {"w": constants.RULE_EUCLIDEAN, "P": constants.RULE_AIM}
    )
    updated = optimizer.step(params, {"w": np.ones(3), "P": np.eye(3)})
    for name, value in params.items():
        np.testing.assert_array_equal(updated[name], value)


def test_optimizer_weight_decay_only_on_euclidean(rng):
    P = random_spd(rng, 3)
    w = rng.standard_normal(3)
    config = OptimizerConfig(learning_rate=0.1, amsgrad=False, weight_decay=0.5)
    optimizer = Optimizer(config, {"w": constants.RULE_EUCLIDEAN, "P": constants.RULE_AIM})
    updated = optimizer.step({"w": w, "P": P}, {"w": np.zeros(3), "P": np.zeros((3, 3))})
    np.testing.assert_allclose(updated["w"], w - 0.1 * 0.5 * w)
    np.testing.assert_allclose(updated["P"], P, rtol=1e-10)


def test_optimizer_weight_decay_skips_undecayed_names(rng):
    weights, biases = rng.standard_normal(3), rng.standard_normal(2)
    config = OptimizerConfig(learning_rate=0.1, amsgrad=False, weight_decay=0.5)
    rules = {
        "weights": constants.RULE_EUCLIDEAN,
        "biases": constants.RULE_EUCLIDEAN,
        "P": constants.RULE_AIM,
    }
    optimizer = Optimizer(config, rules, decayed=["weights"])
    updated = optimizer.step(
        {"weights": weights, "biases": biases}, {"weights": np.zeros(3), "biases": np.zeros(2)}
    )
    np.testing.assert_allclose(updated["weights"], 0.95 * weights)
    np.testing.assert_array_equal(updated["biases"], biases)
    with pytest.raises(ConfigurationError):
        Optimizer(config, rules, decayed=["P"])


def test_optimizer_rejects_unknown_parameters(rng):
    optimizer = Optimizer(OptimizerConfig(learning_rate=0.1), {"w": constants.RULE_EUCLIDEAN})
    with pytest.raises(ContractViolationError):
        optimizer.step({"w": np.zeros(2), "v": np.zeros(2)}, {"v": np.ones(2)})
    with pytest.raises(ContractViolationError):
        optimizer.step({"w": np.zeros(2)}, {"w": np.ones(3)})
    with pytest.raises(ConfigurationError):
        Optimizer(OptimizerConfig(learning_rate=0.1), {"w": "adam"})


def test_optimizer_keeps_parameters_on_their_manifolds(rng):
    W = np.linalg.qr(rng.standard_normal((5, 3)))[0].T
    params = {"W": W, "P": random_spd(rng, 3), "A": random_sym(rng, 3)}
    rules = {"W": constants.RULE_STIEFEL, "P": constants.RULE_AIM, "A": constants.RULE_EUCLIDEAN}
    optimizer = Optimizer(OptimizerConfig(learning_rate=0.05), rules)
    for _ in range(50):
        grads = {name: rng.standard_normal(value.shape) for name, value in params.items()}
        params = optimizer.step(params, grads)
        np.testing.assert_allclose(params["W"] @ params["W"].T, np.eye(3), atol=1e-8)
        assert matfun.is_spd(params["P"])
        assert np.all(optimizer.state.params["P"].max_second >= 0)
