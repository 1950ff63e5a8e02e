"""Seeded random variates: Poisson, inverse-gamma and doubly truncated normal draws.

All draws go through an explicit ``numpy.random.Generator`` (PCG64, 128-bit state,
64-bit output). There is no module level generator.
"""
import math
from typing import List, Union

import numpy as np

ArrayLike = Union[float, np.ndarray]

SQRT_2PI = math.sqrt(2.0 * math.pi)
SQRT_E = math.sqrt(math.e)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def rng_state(rng: np.random.Generator) -> dict:
    """JSON serialisable generator state (the PCG64 state dict)."""
    return rng.bit_generator.state


def restore_rng(state: dict) -> np.random.Generator:
    bit_generator = np.random.PCG64()
    bit_generator.state = state
    return np.random.Generator(bit_generator)


def spawn_seeds(seed: int, n: int) -> List[int]:
    """n independent 64-bit seeds derived from one user seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint64)]


def _exponential_threshold(a: np.ndarray) -> np.ndarray:
    # Interval width above which the exponential proposal beats the uniform one (a >= 0).
    root = np.sqrt(a * a + 4.0)
    return a + 2.0 * SQRT_E / (a + root) * np.exp((a * a - a * root) / 4.0)


def _standard_truncnorm(rng: np.random.Generator, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Draws from N(0, 1) restricted to (a, b] by accept-reject.

    Proposals follow Robert (1995): intervals below zero are mirrored, then
    - straddling zero and wide: plain normal proposals;
    - straddling zero and narrow: uniform proposals, acceptance exp(-z^2/2);
    - positive lower bound, wide: translated exponential with the optimal rate;
    - positive lower bound, narrow: uniform proposals, acceptance exp((a^2 - z^2)/2).
    """
    flip = b <= 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)

    straddle = lo < 0
    normal = straddle & (hi - lo >= SQRT_2PI)
    uniform0 = straddle & ~normal
    with np.errstate(invalid="ignore", over="ignore"):
        exponential = ~straddle & (hi >= _exponential_threshold(np.where(straddle, 0.0, lo)))
        rate = (lo + np.sqrt(lo * lo + 4.0)) / 2.0
    uniform_pos = ~straddle & ~exponential

    out = np.empty(a.shape)
    pending = np.arange(a.size)
    while pending.size:
        lo_p, hi_p = lo[pending], hi[pending]
        z = np.empty(pending.size)
        ok = np.zeros(pending.size, dtype=bool)

        m = normal[pending]
        if m.any():
            z[m] = rng.standard_normal(m.sum())
            ok[m] = (z[m] > lo_p[m]) & (z[m] <= hi_p[m])

        m = uniform0[pending]
        if m.any():
            z[m] = rng.uniform(lo_p[m], hi_p[m])
            ok[m] = rng.random(m.sum()) <= np.exp(-0.5 * z[m] ** 2)

        m = exponential[pending]
        if m.any():
            r = rate[pending][m]
            z[m] = lo_p[m] + rng.standard_exponential(m.sum()) / r
            ok[m] = (z[m] <= hi_p[m]) & (rng.random(m.sum()) <= np.exp(-0.5 * (z[m] - r) ** 2))

        m = uniform_pos[pending]
        if m.any():
            z[m] = rng.uniform(lo_p[m], hi_p[m])
            ok[m] = rng.random(m.sum()) <= np.exp(0.5 * (lo_p[m] ** 2 - z[m] ** 2))

        out[pending[ok]] = z[ok]
        pending = pending[~ok]

    return np.where(flip, -out, out)


def trunc_normal(rng: np.random.Generator, mean: ArrayLike, std: ArrayLike, lo: ArrayLike, hi: ArrayLike) -> np.ndarray:
    """Vectorised draws from N(mean, std^2) restricted to (lo, hi]. Bounds may be infinite."""
    mean, std, lo, hi = np.broadcast_arrays(
        np.asarray(mean, dtype=float), np.asarray(std, dtype=float),
        np.asarray(lo, dtype=float), np.asarray(hi, dtype=float),
    )
    if np.any(std <= 0):
        raise ValueError("std must be positive")
    if np.any(lo >= hi):
        raise ValueError("truncation interval is empty (lo >= hi)")
    shape = mean.shape
    mean, std, lo, hi = mean.ravel(), std.ravel(), lo.ravel(), hi.ravel()

    with np.errstate(invalid="ignore"):
        a = (lo - mean) / std
        b = (hi - mean) / std
    s = mean + std * _standard_truncnorm(rng, a, b)
    # Rounding in the affine map must not push a draw onto or past a bound.
    s = np.minimum(np.maximum(s, np.nextafter(lo, np.inf)), hi)
    return s.reshape(shape)


def trunc_normal_sample(rng: np.random.Generator, mean: float, std: float, lo: float, hi: float) -> float:
    return float(trunc_normal(rng, mean, std, lo, hi))


def poisson_sample(rng: np.random.Generator, lam: float) -> int:
    if lam < 0:
        raise ValueError("Poisson rate must be non-negative")
    if lam == 0:
        return 0
    return int(rng.poisson(lam))


def inverse_gamma_sample(rng: np.random.Generator, shape: float, rate: float) -> float:
    """v with 1/v ~ Gamma(shape, rate)."""
    if shape <= 0 or rate <= 0:
        raise ValueError("inverse-gamma parameters must be positive")
    return 1.0 / rng.gamma(shape, 1.0 / rate)
