"""
Pullback Euclidean metrics on the SPD manifold.

A metric is realized by a diffeomorphism ``phi`` from S++(n) into a flat matrix
space. The (alpha, beta) isometry of the Log-Euclidean metric and the ``1/theta``
scale of the Log-Cholesky metric are folded into ``phi``, so every Riemannian
operator below only needs the plain Frobenius inner product in the chart.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

import spdmlr.core.constants as constants
from spdmlr.core.error import ConfigurationError, DomainError
from spdmlr.geometry import matfun


@dataclass(frozen=True)
class MetricSpec:
    kind: str
    alpha: float = 1.0
    beta: float = 0.0
    theta: float = 1.0

    @classmethod
    def lem(cls, alpha=1.0, beta=0.0):
        return cls(kind=constants.METRIC_LEM, alpha=float(alpha), beta=float(beta))

    @classmethod
    def lcm(cls, theta=1.0):
        return cls(kind=constants.METRIC_LCM, theta=float(theta))

    @classmethod
    def from_config(cls, config):
        kind = config.get("metric.kind")
        if kind == constants.METRIC_LEM:
            return cls.lem(config.get("metric.alpha"), config.get("metric.beta"))
        if kind == constants.METRIC_LCM:
            return cls.lcm(config.get("metric.theta"))
        raise ConfigurationError(f"metric.kind {kind!r} is not a pullback metric")

    def validate(self, n=None):
        if self.kind == constants.METRIC_LEM:
            if n is not None and min(self.alpha, self.alpha + n * self.beta) <= 0:
                raise ConfigurationError(
                    f"LEM(alpha={self.alpha}, beta={self.beta}) is inadmissible at n={n}: "
                    "min(alpha, alpha + n*beta) must be > 0"
                )
            if self.alpha <= 0:
                raise ConfigurationError(f"LEM alpha must be > 0, got {self.alpha}")
        elif self.kind == constants.METRIC_LCM:
            if self.theta == 0:
                raise ConfigurationError("LCM theta must be nonzero")
        else:
            raise ConfigurationError(f"unknown metric kind {self.kind!r}")
        return self

    def describe(self):
        if self.kind == constants.METRIC_LEM:
            return f"alpha={self.alpha:g},beta={self.beta:g}"
        return f"theta={self.theta:g}"

    def __str__(self):
        return f"{self.kind.upper()}({self.describe()})"


@dataclass(frozen=True)
class ChartPoint:
    """The image ``phi(S)`` of an SPD matrix, stored as an n x n array."""

    metric: MetricSpec
    entries: np.ndarray

    @property
    def dim(self):
        return self.entries.shape[-1]

    def to_spd(self):
        return make_metric(self.metric).phi_inv(self.entries)


@dataclass(frozen=True)
class TangentVector:
    base: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        if np.shape(self.base) != np.shape(self.value):
            raise DomainError(
                f"tangent vector of shape {np.shape(self.value)} does not match base {np.shape(self.base)}"
            )


def beta_candidates(n, eps=constants.BETA_EPSILON):
    """Candidate ``beta`` values for LEM(1, beta) at dimension ``n``; all admissible."""
    return [1.0, 1.0 / n, 1.0 / n**2, 0.0, -1.0 / n + eps, -1.0 / n**2]


def lem_inner(alpha, beta, V, W):
    """The O(n)-invariant inner product ``alpha <V, W> + beta tr(V) tr(W)``."""
    return alpha * matfun.inner(V, W) + beta * trace(V) * trace(W)


def trace(M):
    return np.trace(M, axis1=-2, axis2=-1)


class PullbackMetric(ABC):
    """
    Generic Riemannian operators of a metric pulled back through ``phi``.

    Subclasses implement the chart map, its inverse, the differentials and the
    adjoint of the differential; everything else is derived here.
    """

    def __init__(self, spec):
        self.spec = spec.validate()

    @property
    def kind(self):
        return self.spec.kind

    def check(self, S):
        S = matfun.as_symmetric(S)
        self.spec.validate(S.shape[-1])
        return S

    @abstractmethod
    def phi(self, S):
        pass

    @abstractmethod
    def phi_inv(self, X):
        pass

    @abstractmethod
    def dphi(self, S, V):
        pass

    @abstractmethod
    def dphi_inv(self, X, W):
        """Differential of ``phi_inv`` at chart point ``X`` applied to ``W``."""
        pass

    @abstractmethod
    def dphi_adjoint(self, S, G):
        """Adjoint of ``V -> dphi(S, V)``, mapping chart-space matrices to Sym(n)."""
        pass

    @abstractmethod
    def dphi_adjoint_inverse(self, S, M):
        pass

    def chart_point(self, S):
        return ChartPoint(metric=self.spec, entries=self.phi(S))

    def metric_at(self, P, V, W):
        return matfun.inner(self.dphi(P, V), self.dphi(P, W))

    def norm_at(self, P, V):
        return np.sqrt(self.metric_at(P, V, V))

    def geodesic_dist(self, S1, S2):
        return matfun.frobenius_norm(self.phi(S1) - self.phi(S2))

    def rie_exp(self, P, V):
        return self.phi_inv(self.phi(P) + self.dphi(P, V))

    def rie_log(self, P, Q):
        X = self.phi(P)
        return self.dphi_inv(X, self.phi(Q) - X)

    def parallel_transport(self, P, Q, V):
        return self.dphi_inv(self.phi(Q), self.dphi(P, V))

    def group_mul(self, S1, S2):
        return self.phi_inv(self.phi(S1) + self.phi(S2))

    def group_identity(self, n):
        return self.phi_inv(np.zeros((n, n)))

    def group_inverse(self, S):
        return self.phi_inv(-self.phi(S))

    def left_translation_diff(self, P, Q, V):
        """
        Differential at ``P`` of ``S -> R (.) S`` with ``R = Q (.) P^{-1}``.

        The translation maps ``P`` to ``Q``; the result coincides with
        ``parallel_transport(P, Q, V)``.
        """
        R = self.group_mul(Q, self.group_inverse(P))
        X = self.phi(R) + self.phi(P)
        return self.dphi_inv(X, self.dphi(P, V))

    def project_gradient(self, P, euclid_grad):
        """Riemannian gradient at ``P`` of a function with Euclidean gradient ``euclid_grad``."""
        G = matfun.symmetrize(euclid_grad)
        return self.dphi_inv(self.phi(P), self.dphi_adjoint_inverse(P, G))

    def __repr__(self):
        return f"{self.__class__.__name__}({self.spec})"


class LogEuclideanMetric(PullbackMetric):
    """(alpha, beta)-LEM: ``phi = f o mlog`` with ``f`` the linear (alpha, beta) isometry."""

    @property
    def alpha(self):
        return self.spec.alpha

    @property
    def beta(self):
        return self.spec.beta

    def iso(self, V):
        n = V.shape[-1]
        eye = np.eye(n)
        mean_trace = (trace(V) / n)[..., None, None]
        traceless = V - mean_trace * eye
        trace_scale = np.sqrt(self.alpha + n * self.beta)
        return np.sqrt(self.alpha) * traceless + trace_scale * mean_trace * eye

    def iso_inv(self, X):
        n = X.shape[-1]
        self.spec.validate(n)
        eye = np.eye(n)
        mean_trace = (trace(X) / n)[..., None, None]
        traceless = X - mean_trace * eye
        trace_scale = np.sqrt(self.alpha + n * self.beta)
        return traceless / np.sqrt(self.alpha) + mean_trace * eye / trace_scale

    def phi(self, S):
        S = self.check(S)
        return self.iso(matfun.mlog(S))

    def phi_inv(self, X):
        X = matfun.as_symmetric(X)
        return matfun.mexp(self.iso_inv(X))

    def dphi(self, S, V):
        S = self.check(S)
        return self.iso(matfun.mat_fn_diff(S, matfun.LOG, V))

    def dphi_inv(self, X, W):
        X = matfun.as_symmetric(X)
        return matfun.mat_fn_diff(self.iso_inv(X), matfun.EXP, self.iso_inv(matfun.as_symmetric(W)))

    def dphi_adjoint(self, S, G):
        S = self.check(S)
        return matfun.mat_fn_diff(S, matfun.LOG, self.iso(matfun.symmetrize(G)))

    def dphi_adjoint_inverse(self, S, M):
        S = self.check(S)
        return self.iso_inv(matfun.mat_fn_diff(S, matfun.LOG, M, inverse=True))


class LogCholeskyMetric(PullbackMetric):
    """
    theta-LCM: ``phi(S) = (1/theta) [strict_lower(K) + dlog(K)]`` with ``K = chol(S^theta)``.

    The chart is the space of lower triangular matrices.
    """

    @property
    def theta(self):
        return self.spec.theta

    def factor(self, S):
        return matfun.chol(matfun.mpow(S, self.theta))

    def factor_from_chart(self, X):
        X = np.asarray(X, dtype=float)
        matfun.check_square(X)
        upper = np.max(np.abs(matfun.strict_upper(X)), initial=0.0)
        if upper > constants.SYMMETRY_TOLERANCE * max(np.max(np.abs(X), initial=0.0), 1.0):
            raise DomainError(
                f"LCM chart points are lower triangular, found upper entry {upper:.3g}"
            )
        return self.theta * matfun.strict_lower(X) + matfun.embed_diagonal(
            np.exp(self.theta * matfun.diagonal(X))
        )

    def phi(self, S):
        K = self.factor(self.check(S))
        return (matfun.strict_lower(K) + matfun.dlog(K)) / self.theta

    def phi_inv(self, X):
        K = self.factor_from_chart(X)
        return matfun.mpow(K @ matfun.transpose(K), 1.0 / self.theta)

    def _chart_scale(self, K, dK):
        scaled = matfun.strict_lower(dK) + matfun.diag_part(dK) / matfun.diagonal(K)[..., None, :]
        return scaled / self.theta

    def dphi(self, S, V):
        S = self.check(S)
        T = matfun.mpow(S, self.theta)
        K = matfun.chol(T)
        dT = matfun.mat_fn_diff(S, matfun.POW, V, theta=self.theta)
        dK = matfun.chol_diff(T, dT, K)
        return self._chart_scale(K, dK)

    def dphi_inv(self, X, W):
        K = self.factor_from_chart(X)
        W = np.asarray(W, dtype=float)
        dK = self.theta * (
            matfun.strict_lower(W) + matfun.diag_part(W) * matfun.diagonal(K)[..., None, :]
        )
        T = K @ matfun.transpose(K)
        dT = matfun.chol_inverse_diff(K, dK)
        return matfun.mat_fn_diff(T, matfun.POW, dT, theta=1.0 / self.theta)

    def dphi_adjoint(self, S, G):
        S = self.check(S)
        K = self.factor(S)
        G = np.asarray(G, dtype=float)
        H = self._chart_scale(K, np.tril(G))
        return matfun.mat_fn_diff(S, matfun.POW, matfun.chol_diff_adjoint(K, H), theta=self.theta)

    def dphi_adjoint_inverse(self, S, M):
        S = self.check(S)
        K = self.factor(S)
        M1 = matfun.mat_fn_diff(S, matfun.POW, M, inverse=True, theta=self.theta)
        H = matfun.chol_diff_adjoint_inverse(K, M1)
        return self.theta * (
            matfun.strict_lower(H) + matfun.diag_part(H) * matfun.diagonal(K)[..., None, :]
        )


METRIC_CLASSES = {
    constants.METRIC_LEM: LogEuclideanMetric,
    constants.METRIC_LCM: LogCholeskyMetric,
}


def make_metric(spec):
    if isinstance(spec, PullbackMetric):
        return spec
    try:
        klass = METRIC_CLASSES[spec.kind]
    except KeyError:
        raise ConfigurationError(f"unknown metric kind {spec.kind!r}")
    return klass(spec)
