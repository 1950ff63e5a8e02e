"""Mapping functions f_d, their inverses and per-type observation likelihoods.

Every function is pure and vectorised over numpy arrays. ``params`` is anything
exposing ``w`` and ``mu`` (an AttributeSpec or a TransformParams).
"""
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np
from numpy.polynomial.hermite import hermgauss
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import log_ndtr, ndtr

from glfm.models import AttributeKind

ArrayLike = Union[float, np.ndarray]

LOG_2PI = np.log(2.0 * np.pi)


class TransformParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    w: float = Field(1.0, gt=0)
    mu: float = 0.0


# Normal CDF helpers
def phi_diff(lo: ArrayLike, hi: ArrayLike) -> np.ndarray:
    """Phi(hi) - Phi(lo) for lo <= hi, using upper tails when both are positive."""
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    upper = lo > 0
    return np.where(upper, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))


def log_phi_diff(lo: ArrayLike, hi: ArrayLike) -> np.ndarray:
    """log(Phi(hi) - Phi(lo)) without underflow in either tail."""
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    upper = lo > 0
    a = np.where(upper, -hi, lo)
    b = np.where(upper, -lo, hi)
    log_b = log_ndtr(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        return log_b + np.log1p(-np.exp(log_ndtr(a) - log_b))


@lru_cache(maxsize=8)
def gauss_hermite(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E[g(u)], u ~ N(0, 1): sum(w * g(x))."""
    x, w = hermgauss(nodes)
    return x * np.sqrt(2.0), w / np.sqrt(np.pi)


def _log_expm1(x: np.ndarray) -> np.ndarray:
    # log(e^x - 1); -inf at x = 0
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(x > 30.0, x + np.log1p(-np.exp(-np.minimum(x, 700.0))), np.log(np.expm1(np.minimum(x, 30.0))))


# Mapping functions
def map_forward(y: ArrayLike, params, kind: AttributeKind, theta: Optional[np.ndarray] = None) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if kind == AttributeKind.REAL:
        return params.w * y + params.mu
    if kind == AttributeKind.POSITIVE_REAL:
        return np.logaddexp(0.0, params.w * y + params.mu)
    if kind == AttributeKind.COUNT:
        return np.floor(np.logaddexp(0.0, params.w * y + params.mu))
    if kind == AttributeKind.ORDINAL:
        if theta is None:
            raise ValueError("ordinal mapping needs thresholds")
        # region r satisfies theta_{r-1} < y <= theta_r
        return np.searchsorted(np.asarray(theta, dtype=float), y, side="left") + 1
    raise ValueError(f"map_forward does not handle {kind.value} attributes")


def map_inverse(x: ArrayLike, params, kind: AttributeKind) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if kind == AttributeKind.REAL:
        return (x - params.mu) / params.w
    if kind == AttributeKind.POSITIVE_REAL:
        if np.any(x <= 0):
            raise ValueError("positive real observations must be > 0")
        return (_log_expm1(x) - params.mu) / params.w
    if kind == AttributeKind.COUNT:
        if np.any(x < 0):
            raise ValueError("count observations must be >= 0")
        return (_log_expm1(x) - params.mu) / params.w
    raise ValueError(f"map_inverse does not handle {kind.value} attributes")


def log_jacobian(x: ArrayLike, params, kind: AttributeKind) -> np.ndarray:
    """log |d f^{-1} / dx|."""
    x = np.asarray(x, dtype=float)
    if kind == AttributeKind.REAL:
        return np.full_like(x, -np.log(params.w))
    if kind == AttributeKind.POSITIVE_REAL:
        # e^x / (e^x - 1)
        return x - _log_expm1(x) - np.log(params.w)
    raise ValueError(f"no density for {kind.value} attributes")


# Likelihoods
def loglik_continuous(x: ArrayLike, m: ArrayLike, total_var: ArrayLike, params, kind: AttributeKind) -> np.ndarray:
    if np.any(np.asarray(total_var) <= 0):
        raise ValueError("total variance must be positive")
    y = map_inverse(x, params, kind)
    return -0.5 * (LOG_2PI + np.log(total_var) + (y - m) ** 2 / total_var) + log_jacobian(x, params, kind)


def categorical_probs(m: np.ndarray, sigma_y: float, nodes: int = 32) -> np.ndarray:
    """p(x = r) for every r, given predictors m of shape (..., R).

    E_u prod_{j != r} Phi(u + m_r - m_j), u ~ N(0, sigma_y^2), by Gauss-Hermite.
    """
    m = np.asarray(m, dtype=float)
    u, weights = gauss_hermite(nodes)
    diff = m[..., :, None] - m[..., None, :]  # [.., r, j] = m_r - m_j
    log_cdf = log_ndtr(sigma_y * u + diff[..., None])
    R = m.shape[-1]
    log_cdf[..., np.arange(R), np.arange(R), :] = 0.0
    return np.exp(log_cdf.sum(axis=-2)) @ weights


def prob_categorical(r: int, z: np.ndarray, B: np.ndarray, sigma_y: float, nodes: int = 32) -> float:
    R = B.shape[1]
    if not 1 <= r <= R:
        raise ValueError(f"category {r} outside 1..{R}")
    m = np.asarray(z, dtype=float) @ B
    return float(categorical_probs(m, sigma_y, nodes)[r - 1])


def threshold_edges(theta: np.ndarray) -> np.ndarray:
    """theta padded with -inf and +inf: region r is (edges[r-1], edges[r]]."""
    return np.concatenate(([-np.inf], np.asarray(theta, dtype=float), [np.inf]))


def ordinal_probs(m: ArrayLike, theta: np.ndarray, sigma_y: float) -> np.ndarray:
    """p(x = r) for r = 1..R, shape (..., R)."""
    edges = threshold_edges(theta)
    m = np.asarray(m, dtype=float)[..., None]
    return phi_diff((edges[:-1] - m) / sigma_y, (edges[1:] - m) / sigma_y)


def prob_ordinal(r: int, m: float, theta: np.ndarray, sigma_y: float) -> float:
    edges = threshold_edges(theta)
    if not 1 <= r <= len(edges) - 1:
        raise ValueError(f"category {r} outside 1..{len(edges) - 1}")
    return float(phi_diff((edges[r - 1] - m) / sigma_y, (edges[r] - m) / sigma_y))


def log_prob_ordinal(x: ArrayLike, m: ArrayLike, theta: np.ndarray, sigma_y: float) -> np.ndarray:
    edges = threshold_edges(theta)
    x = np.asarray(x, dtype=int)
    return log_phi_diff((edges[x - 1] - m) / sigma_y, (edges[x] - m) / sigma_y)


def count_bounds(x: ArrayLike, params) -> Tuple[np.ndarray, np.ndarray]:
    """Pseudo-observation interval [f^{-1}(x), f^{-1}(x + 1)) of a count."""
    x = np.asarray(x, dtype=float)
    return map_inverse(x, params, AttributeKind.COUNT), map_inverse(x + 1, params, AttributeKind.COUNT)


def prob_count(x: ArrayLike, m: ArrayLike, params, sigma_y: float) -> np.ndarray:
    if np.any(np.asarray(x) < 0):
        raise ValueError("counts must be non-negative")
    lo, hi = count_bounds(x, params)
    return phi_diff((lo - m) / sigma_y, (hi - m) / sigma_y)


def log_prob_count(x: ArrayLike, m: ArrayLike, params, sigma_y: float) -> np.ndarray:
    lo, hi = count_bounds(x, params)
    return log_phi_diff((lo - m) / sigma_y, (hi - m) / sigma_y)


def loglik_cell(x: ArrayLike, m: np.ndarray, spec, sigma2: float, sigma_u2: float,
                theta: Optional[np.ndarray] = None, nodes: int = 32) -> np.ndarray:
    """Log-likelihood of encoded observations x under linear predictors m.

    For categorical attributes m has a trailing axis of length R_d.
    """
    kind = spec.kind
    if kind.is_continuous:
        return loglik_continuous(x, m, sigma2 + sigma_u2, spec, kind)
    sigma = np.sqrt(sigma2)
    if kind == AttributeKind.CATEGORICAL:
        probs = categorical_probs(m, sigma, nodes)
        idx = np.asarray(x, dtype=int) - 1
        with np.errstate(divide="ignore"):
            return np.log(np.take_along_axis(probs, idx[..., None], axis=-1)[..., 0])
    if kind == AttributeKind.ORDINAL:
        return log_prob_ordinal(x, m, theta, sigma)
    return log_prob_count(x, m, spec, sigma)
