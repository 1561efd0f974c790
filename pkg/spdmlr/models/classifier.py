"""
SPD hyperplanes, margin distances and multinomial logistic regression heads.

The intrinsic head scores a matrix ``S`` against class ``k`` by the signed
chart-space projection ``<phi(S) - phi(P_k), phi_{*,I}(A_k)>``. Inputs may be a
single matrix or a batch ``(B, n, n)``; logits come back as ``(C,)`` or ``(B, C)``.
"""

from dataclasses import dataclass

import numpy as np

import spdmlr.core.constants as constants
from spdmlr.core.error import (
    ConfigurationError,
    DegenerateHyperplaneError,
    DimensionError,
)
from spdmlr.geometry import matfun
from spdmlr.geometry.metrics import MetricSpec, lem_inner, make_metric, trace

LOGEIG_BIAS = "bias"
LOGEIG_POINT = "point"
LOGEIG_PARAMETERIZATIONS = [
    LOGEIG_BIAS,
    LOGEIG_POINT,
]


def softmax(logits, axis=-1):
    logits = np.asarray(logits, dtype=float)
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    weights = np.exp(shifted)
    return weights / np.sum(weights, axis=axis, keepdims=True)


def identity_stack(M):
    return matfun.identity_like(M)


def vectorize(M):
    """Row-major full vectorization of the trailing ``n x n`` block."""
    M = np.asarray(M, dtype=float)
    return M.reshape(M.shape[:-2] + (M.shape[-1] * M.shape[-1],))


def unvectorize(x, n):
    x = np.asarray(x, dtype=float)
    return x.reshape(x.shape[:-1] + (n, n))


@dataclass(frozen=True)
class Hyperplane:
    metric: MetricSpec
    shift: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        shift = matfun.as_spd(self.shift)
        normal = matfun.as_symmetric(self.normal)
        if shift.shape != normal.shape:
            raise DimensionError(f"shift {shift.shape} and normal {normal.shape} dimensions differ")
        if matfun.frobenius_norm(normal) <= constants.NORMAL_NORM_TOLERANCE:
            raise DegenerateHyperplaneError("hyperplane normal must be nonzero")
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "normal", normal)
        self.metric.validate(shift.shape[-1])

    @property
    def dim(self):
        return self.shift.shape[-1]

    def normal_chart(self):
        """``phi_{*,I}(normal)``."""
        return make_metric(self.metric).dphi(np.eye(self.dim), self.normal)

    def normal_chart_norm(self):
        return float(matfun.frobenius_norm(self.normal_chart()))


def signed_projection(S, H):
    metric = make_metric(H.metric)
    return matfun.inner(metric.phi(S) - metric.phi(H.shift), H.normal_chart())


def margin_distance(S, H):
    return np.abs(signed_projection(S, H)) / H.normal_chart_norm()


def hyperplane_membership(S, H, tol):
    if tol <= 0:
        raise ConfigurationError(f"membership tolerance must be > 0, got {tol}")
    return np.abs(signed_projection(S, H)) <= tol * H.normal_chart_norm()


class MlrHead:
    """
    Intrinsic SPD MLR head: one hyperplane ``(P_k, A_k)`` per class.

    Normals live in the tangent space at the identity and are unconstrained
    symmetric parameters; shifts are SPD parameters.
    """

    def __init__(self, metric, shifts, normals):
        self.metric_spec = metric
        self.metric = make_metric(metric)
        self.shifts = matfun.as_spd(shifts)
        self.normals = matfun.as_symmetric(normals)
        if self.shifts.ndim != 3 or self.shifts.shape != self.normals.shape:
            raise DimensionError(
                f"expected (C, n, n) shifts and normals, got {self.shifts.shape} and {self.normals.shape}"
            )
        if self.num_classes < 2:
            raise ConfigurationError(
                f"an MLR head needs at least 2 classes, got {self.num_classes}"
            )
        norms = matfun.frobenius_norm(self.normals)
        if np.any(norms <= constants.NORMAL_NORM_TOLERANCE):
            raise DegenerateHyperplaneError(
                f"class normals must be nonzero, got zero normal for classes {np.flatnonzero(norms <= constants.NORMAL_NORM_TOLERANCE).tolist()}"
            )
        self.metric_spec.validate(self.dim)

    @property
    def num_classes(self):
        return self.shifts.shape[0]

    @property
    def dim(self):
        return self.shifts.shape[-1]

    def params(self):
        return {"shifts": self.shifts, "normals": self.normals}

    def hyperplanes(self):
        return [
            Hyperplane(self.metric_spec, shift, normal)
            for shift, normal in zip(self.shifts, self.normals)
        ]

    def _check_input(self, S):
        S = matfun.as_symmetric(S)
        if S.shape[-1] != self.dim:
            raise DimensionError(f"head expects {self.dim}x{self.dim} inputs, got {S.shape}")
        return S

    def chart_terms(self):
        Z = self.metric.phi(self.shifts)
        N = self.metric.dphi(identity_stack(self.normals), self.normals)
        return Z, N

    def logits(self, S):
        S = self._check_input(S)
        Z, N = self.chart_terms()
        X = self.metric.phi(S)
        return np.einsum("...kij,kij->...k", X[..., None, :, :] - Z, N)

    def backward(self, S, grad_logits):
        """
        Gradients of ``sum(grad_logits * logits(S))`` for a batch ``S``.

        :returns: (input gradient, {"shifts": ..., "normals": ...})
        """
        S = self._check_input(S)
        g = np.asarray(grad_logits, dtype=float)
        Z, N = self.chart_terms()
        X = self.metric.phi(S)
        class_weight = np.sum(g, axis=0)
        dX = np.einsum("bk,kij->bij", g, N)
        dN = np.einsum("bk,bij->kij", g, X) - class_weight[:, None, None] * Z
        dZ = -class_weight[:, None, None] * N
        grads = {
            "shifts": self.metric.dphi_adjoint(self.shifts, dZ),
            "normals": self.metric.dphi_adjoint(identity_stack(self.normals), dN),
        }
        return self.metric.dphi_adjoint(S, dX), grads


class LogEigHead:
    """
    Euclidean MLR over ``vec(mlog S)``.

    ``bias`` parameterization scores ``<a_k, x> - b_k``; ``point`` scores
    ``<a_k, x - p_k>`` with a point ``p_k`` on each Euclidean hyperplane.
    """

    def __init__(self, weights, biases=None, points=None, parameterization=LOGEIG_BIAS):
        if parameterization not in LOGEIG_PARAMETERIZATIONS:
            raise ConfigurationError(
                f"LogEig parameterization must be one of {', '.join(LOGEIG_PARAMETERIZATIONS)}, got {parameterization!r}"
            )
        self.parameterization = parameterization
        self.weights = np.asarray(weights, dtype=float)
        if self.weights.ndim != 2:
            raise DimensionError(f"expected (C, n*n) weights, got {self.weights.shape}")
        num_classes, features = self.weights.shape
        n = int(round(np.sqrt(features)))
        if n * n != features:
            raise DimensionError(f"weight width {features} is not a square")
        self.n = n
        if num_classes < 2:
            raise ConfigurationError(f"a LogEig head needs at least 2 classes, got {num_classes}")
        if parameterization == LOGEIG_BIAS:
            self.biases = (
                np.zeros(num_classes) if biases is None else np.asarray(biases, dtype=float)
            )
            if self.biases.shape != (num_classes,):
                raise DimensionError(f"expected ({num_classes},) biases, got {self.biases.shape}")
        else:
            self.points = (
                np.zeros_like(self.weights) if points is None else np.asarray(points, dtype=float)
            )
            if self.points.shape != self.weights.shape:
                raise DimensionError(
                    f"expected {self.weights.shape} points, got {self.points.shape}"
                )

    @property
    def num_classes(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.n

    def params(self):
        if self.parameterization == LOGEIG_BIAS:
            return {"weights": self.weights, "biases": self.biases}
        return {"weights": self.weights, "points": self.points}

    def effective_biases(self):
        if self.parameterization == LOGEIG_BIAS:
            return self.biases
        return np.sum(self.weights * self.points, axis=-1)

    def logits(self, X):
        """Logits for tangent features ``X = mlog(S)``."""
        x = vectorize(X)
        return x @ self.weights.T - self.effective_biases()

    def backward(self, X, grad_logits):
        x = vectorize(X)
        g = np.asarray(grad_logits, dtype=float)
        class_weight = np.sum(g, axis=0)
        dx = unvectorize(g @ self.weights, self.n)
        grads = {"weights": g.T @ x}
        if self.parameterization == LOGEIG_BIAS:
            grads["biases"] = -class_weight
        else:
            grads["weights"] = grads["weights"] - class_weight[:, None] * self.points
            grads["points"] = -class_weight[:, None] * self.weights
        return dx, grads


def mlr_logits_generic(S, head):
    return head.logits(S)


def mlr_logits_lem(S, head, alpha, beta):
    """LEM logits evaluated with the (alpha, beta) inner product directly, no isometry."""
    S = matfun.as_spd(S)
    n = S.shape[-1]
    MetricSpec.lem(alpha, beta).validate(n)
    delta = matfun.mlog(S)[..., None, :, :] - matfun.mlog(head.shifts)
    return lem_inner(alpha, beta, delta, head.normals)


def mlr_logits_lcm(S, head, theta):
    MetricSpec.lcm(theta).validate()
    S = matfun.as_spd(S)
    K = matfun.chol(matfun.mpow(S, theta))[..., None, :, :]
    L = matfun.chol(matfun.mpow(head.shifts, theta))
    X = matfun.strict_lower(K) - matfun.strict_lower(L) + matfun.dlog(K) - matfun.dlog(L)
    Y = matfun.lower_half(head.normals)
    return matfun.inner(X, Y) / theta


def logeig_mlr(S, head):
    return head.logits(matfun.mlog(S))


def logeig_from_lem(head, parameterization=LOGEIG_BIAS):
    """LogEig head reproducing an LEM(1, 0) MLR head exactly."""
    weights = vectorize(head.normals)
    if parameterization == LOGEIG_POINT:
        return LogEigHead(
            weights, points=vectorize(matfun.mlog(head.shifts)), parameterization=LOGEIG_POINT
        )
    biases = matfun.inner(head.normals, matfun.mlog(head.shifts))
    return LogEigHead(weights, biases=biases)


@dataclass(frozen=True)
class CloudPoint:
    x: float
    y: float
    z: float
    on_plane: bool

    def matrix(self):
        return np.array([[self.x, self.y], [self.y, self.z]])


def hyperplane_cloud(
    H,
    resolution=constants.CLOUD_DEFAULT_RESOLUTION,
    band=constants.CLOUD_DEFAULT_BAND,
    extent=constants.CLOUD_DEFAULT_EXTENT,
    tol=1e-9,
):
    """
    Sample the 2x2 SPD cone ``x, z > 0, xz > y^2`` on a regular grid and keep
    the points whose margin distance to ``H`` is below ``band``.

    The shift point is always emitted first. ``on_plane`` marks exact
    membership at tolerance ``tol``.
    """
    if H.dim != 2:
        raise DimensionError(f"hyperplane clouds are only defined for 2x2 matrices, got n={H.dim}")
    if resolution < 2 or band <= 0 or extent <= 0:
        raise ConfigurationError("resolution must be >= 2, band and extent must be > 0")
    axis = np.linspace(0.0, extent, resolution + 1)[1:]
    offdiag = np.linspace(-extent, extent, resolution)
    xs, ys, zs = np.meshgrid(axis, offdiag, axis, indexing="ij")
    xs, ys, zs = xs.ravel(), ys.ravel(), zs.ravel()
    grid = np.stack([np.stack([xs, ys], axis=-1), np.stack([ys, zs], axis=-1)], axis=-2)
    inside = np.linalg.eigvalsh(grid)[:, 0] > constants.PD_TOLERANCE
    grid = grid[inside]
    projections = signed_projection(grid, H)
    chart_norm = H.normal_chart_norm()
    distances = np.abs(projections) / chart_norm
    keep = distances < band
    P = H.shift
    points = [CloudPoint(float(P[0, 0]), float(P[0, 1]), float(P[1, 1]), True)]
    for S, projection in zip(grid[keep], projections[keep]):
        points.append(
            CloudPoint(
                float(S[0, 0]),
                float(S[0, 1]),
                float(S[1, 1]),
                bool(abs(projection) <= tol * chart_norm),
            )
        )
    return points
