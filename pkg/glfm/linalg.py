"""Rank-one maintenance of the natural precision P = Z'Z + I/sigma_B^2.

Adding or removing one row z of Z changes P by +/- z z'. The sampler keeps both a
lower Cholesky factor of P (for the weight draws) and P^{-1} (for the collapsed
predictive) in step with these changes.
"""
import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky

from glfm.exceptions import ModelError


def _chol_rank_one(L: np.ndarray, x: np.ndarray, sign: float) -> np.ndarray:
    """Lower factor of L L' + sign * x x', in place.

    Column sweep of the classic cholupdate; only starts at the first non-zero
    entry of x since everything above it is untouched.
    """
    x = np.array(x, dtype=float)
    nonzero = np.flatnonzero(x)
    if nonzero.size == 0:
        return L
    for k in range(nonzero[0], x.size):
        d = L[k, k]
        r_squared = d * d + sign * x[k] * x[k]
        if r_squared <= 0.0:
            raise ModelError("rank-one downdate lost positive definiteness")
        r = np.sqrt(r_squared)
        c = r / d
        s = x[k] / d
        L[k, k] = r
        if k + 1 < x.size:
            L[k + 1:, k] = (L[k + 1:, k] + sign * s * x[k + 1:]) / c
            x[k + 1:] = c * x[k + 1:] - s * L[k + 1:, k]
    return L


def chol_update(L: np.ndarray, x: np.ndarray) -> np.ndarray:
    return _chol_rank_one(L, x, 1.0)


def chol_downdate(L: np.ndarray, x: np.ndarray) -> np.ndarray:
    return _chol_rank_one(L, x, -1.0)


def sherman_morrison(Q: np.ndarray, x: np.ndarray, sign: float) -> np.ndarray:
    """Inverse of (Q^{-1} + sign * x x') given Q."""
    Qx = Q @ x
    denom = 1.0 + sign * (x @ Qx)
    if denom <= 0.0:
        raise ModelError("rank-one inverse update lost positive definiteness")
    return Q - sign * np.outer(Qx, Qx) / denom


def factor(P: np.ndarray) -> np.ndarray:
    if P.shape[0] == 0:
        return np.zeros((0, 0))
    try:
        return cholesky(P, lower=True)
    except LinAlgError:
        raise ModelError("natural precision P is not positive definite")


def inverse_from_factor(L: np.ndarray) -> np.ndarray:
    K = L.shape[0]
    if K == 0:
        return np.zeros((0, 0))
    return cho_solve((L, True), np.eye(K))


def natural_params(Z: np.ndarray, Y: np.ndarray, sigma_B2: float):
    """P and lam computed from scratch."""
    K = Z.shape[1]
    return Z.T @ Z + np.eye(K) / sigma_B2, Z.T @ Y
