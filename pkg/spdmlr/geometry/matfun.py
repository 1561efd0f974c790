"""
Dense symmetric linear algebra: eigendecomposition based matrix functions,
Cholesky factorization, and the first-order differentials of both.

Every function accepts a single ``(n, n)`` matrix or a stack ``(..., n, n)``
and is a pure function of its inputs.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

import spdmlr.core.constants as constants
from spdmlr.core.error import (
    DimensionError,
    DomainError,
    EigenDecompositionError,
    NotPositiveDefiniteError,
    NotSymmetricError,
    SingularDifferentialError,
)

LOG = "log"
EXP = "exp"
POW = "pow"
MATRIX_FUNCTIONS = [
    LOG,
    EXP,
    POW,
]


@dataclass(frozen=True)
class EigenPair:
    """Eigendecomposition ``S = U diag(values) U^T`` with values sorted descending."""

    vectors: np.ndarray
    values: np.ndarray

    def reconstruct(self):
        return assemble(self.vectors, self.values)


def transpose(M):
    return np.swapaxes(M, -1, -2)


def symmetrize(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + transpose(M))


def check_square(M):
    M = np.asarray(M, dtype=float)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise DimensionError(f"expected square matrices, got shape {M.shape}")
    if M.shape[-1] > constants.MAX_MATRIX_DIM:
        raise DimensionError(
            f"matrix dimension {M.shape[-1]} exceeds the supported maximum {constants.MAX_MATRIX_DIM}"
        )
    return M


def check_symmetric(M, tolerance=constants.SYMMETRY_TOLERANCE):
    M = check_square(M)
    asymmetry = np.max(np.abs(M - transpose(M)), initial=0.0)
    if asymmetry > tolerance * np.max(np.abs(M), initial=0.0):
        raise NotSymmetricError(f"matrix is not symmetric: max |S_ij - S_ji| = {asymmetry:.3g}")
    return M


def as_symmetric(M):
    return symmetrize(check_square(M))


def inner(A, B):
    """Frobenius inner product over the last two axes."""
    return np.sum(np.asarray(A) * np.asarray(B), axis=(-2, -1))


def frobenius_norm(M):
    return np.sqrt(inner(M, M))


def identity_like(M):
    M = np.asarray(M)
    return np.broadcast_to(np.eye(M.shape[-1]), M.shape).copy()


def assemble(U, values):
    return (U * values[..., None, :]) @ transpose(U)


def sym_eig(S):
    S = as_symmetric(S)
    try:
        values, vectors = np.linalg.eigh(S)
    except np.linalg.LinAlgError as e:
        raise EigenDecompositionError(S.shape, e)
    return EigenPair(vectors=vectors[..., ::-1], values=values[..., ::-1])


def spd_eig(S, pd_tolerance=constants.PD_TOLERANCE):
    pair = sym_eig(S)
    smallest = np.min(pair.values[..., -1])
    if smallest <= pd_tolerance:
        raise NotPositiveDefiniteError(smallest)
    return pair


def as_spd(S, pd_tolerance=constants.PD_TOLERANCE):
    S = as_symmetric(S)
    spd_eig(S, pd_tolerance)
    return S


def is_spd(S, pd_tolerance=constants.PD_TOLERANCE):
    try:
        as_spd(S, pd_tolerance)
    except (NotPositiveDefiniteError, DimensionError):
        return False
    return True


def scalar_function(fn, theta=None):
    """Return ``(f, f')`` for a matrix function tag."""
    if fn == LOG:
        return np.log, np.reciprocal
    if fn == EXP:
        return np.exp, np.exp
    if fn == POW:
        if theta is None or theta == 0:
            raise DomainError(f"matrix power needs a nonzero exponent, got {theta!r}")
        return (lambda x: np.power(x, theta)), (lambda x: theta * np.power(x, theta - 1.0))
    raise ValueError(f"unknown matrix function {fn!r}, expected one of {MATRIX_FUNCTIONS}")


def eig_for(fn, S):
    # exp acts on Sym(n); log and pow need S++(n).
    return sym_eig(S) if fn == EXP else spd_eig(S)


def mat_fn(S, fn, theta=None):
    f, _ = scalar_function(fn, theta)
    pair = eig_for(fn, S)
    return assemble(pair.vectors, f(pair.values))


def mlog(S):
    return mat_fn(S, LOG)


def mexp(V):
    return mat_fn(V, EXP)


def mpow(S, theta):
    return mat_fn(S, POW, theta)


def loewner_matrix(values, f, df, fvalues=None):
    """
    Divided-difference matrix of ``f`` at the eigenvalues.

    Off-diagonal entries are ``(f(s_i) - f(s_j)) / (s_i - s_j)``; pairs closer than
    ``EIGEN_GAP_TOLERANCE * max|s|`` use the derivative instead.
    """
    values = np.asarray(values, dtype=float)
    fvalues = f(values) if fvalues is None else fvalues
    derivative = df(values)
    gaps = values[..., :, None] - values[..., None, :]
    scale = np.max(np.abs(values), axis=-1)[..., None, None]
    close = np.abs(gaps) <= constants.EIGEN_GAP_TOLERANCE * scale
    safe_gaps = np.where(close, 1.0, gaps)
    divided = (fvalues[..., :, None] - fvalues[..., None, :]) / safe_gaps
    tangent = 0.5 * (derivative[..., :, None] + derivative[..., None, :])
    return np.where(close, tangent, divided)


def daleckii_krein(U, lam, V):
    Ut = transpose(U)
    return U @ (lam * (Ut @ V @ U)) @ Ut


def mat_fn_diff(S, fn, V, inverse=False, theta=None):
    f, df = scalar_function(fn, theta)
    pair = eig_for(fn, S)
    lam = loewner_matrix(pair.values, f, df)
    if inverse:
        if np.any(lam == 0):
            raise SingularDifferentialError(
                f"singular differential of {fn!r}: zero divided difference"
            )
        lam = 1.0 / lam
    return daleckii_krein(pair.vectors, lam, as_symmetric(V))


def strict_lower(M):
    return np.tril(M, -1)


def strict_upper(M):
    return np.triu(M, 1)


def diag_part(M):
    M = np.asarray(M, dtype=float)
    return M * np.eye(M.shape[-1])


def diagonal(M):
    return np.diagonal(M, axis1=-2, axis2=-1)


def embed_diagonal(values):
    values = np.asarray(values, dtype=float)
    return values[..., :, None] * np.eye(values.shape[-1])


def lower_half(M):
    """``strict_lower(M) + diag_part(M) / 2``, the map that appears in the Cholesky differential."""
    return strict_lower(M) + 0.5 * diag_part(M)


def dlog(L):
    d = diagonal(L)
    if np.any(d <= 0):
        raise DomainError("dlog requires a strictly positive diagonal")
    return embed_diagonal(np.log(d))


def chol(S):
    S = as_symmetric(S)
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(np.min(np.linalg.eigvalsh(S)))


def _triangular_solve(L, B, trans):
    L, B = np.broadcast_arrays(np.asarray(L, dtype=float), np.asarray(B, dtype=float))
    if L.ndim == 2:
        return linalg.solve_triangular(L, B, lower=True, trans=trans)
    out = np.empty(L.shape)
    for index in np.ndindex(L.shape[:-2]):
        out[index] = linalg.solve_triangular(L[index], B[index], lower=True, trans=trans)
    return out


def solve_lower(L, B):
    """``L^{-1} B`` by forward substitution."""
    return _triangular_solve(L, B, 0)


def solve_lower_transposed(L, B):
    """``L^{-T} B`` by back substitution."""
    return _triangular_solve(L, B, 1)


def congruence_by_inverse(L, V):
    """``L^{-1} V L^{-T}`` using two triangular solves."""
    return transpose(solve_lower(L, transpose(solve_lower(L, V))))


def chol_diff(S, V, L=None):
    L = chol(S) if L is None else L
    A = congruence_by_inverse(L, as_symmetric(V))
    return L @ lower_half(A)


def chol_diff_adjoint(L, G):
    """Adjoint of ``V -> chol_diff(S, V)`` on Sym(n), with ``L = chol(S)``."""
    M = lower_half(transpose(L) @ G)
    return symmetrize(transpose(solve_lower_transposed(L, transpose(solve_lower_transposed(L, M)))))


def chol_diff_adjoint_inverse(L, M):
    """
    Lower-triangular ``B`` with ``chol_diff_adjoint(L, B) = M`` for symmetric ``M``.

    The lower part of ``L^T B`` must equal ``2 tril(L^T M L)``; each column is an
    upper-triangular system in the trailing block of ``L^T``.
    """
    L = np.asarray(L, dtype=float)
    M = symmetrize(M)
    target = 2.0 * np.tril(transpose(L) @ M @ L)
    B = np.zeros(np.broadcast_shapes(L.shape, M.shape))
    L, target = np.broadcast_arrays(L, target)
    n = L.shape[-1]
    for index in np.ndindex(L.shape[:-2]):
        for j in range(n):
            B[index + (slice(j, None), j)] = linalg.solve_triangular(
                L[index][j:, j:], target[index][j:, j], lower=True, trans=1
            )
    return B


def chol_inverse_diff(L, dL):
    """Differential of ``L -> L L^T``."""
    return dL @ transpose(L) + L @ transpose(dL)
