"""Accelerated collapsed Gibbs sampler.

One sweep: every row of Z is resampled with the weights integrated out (followed
by a draw of new features for that row), empty features are dropped, and then
each attribute gets fresh weights B^d, pseudo-observations Y^d, thresholds and
noise variance.
"""
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import expit, gammaln
from tqdm import tqdm

from glfm import likelihoods as lik
from glfm import linalg, randkit
from glfm.exceptions import ModelError
from glfm.models import AttributeKind, BirthMode, DataMatrix, LatentState, Trace
from glfm.schemas import Hyperparams, TraceRecord

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


# Initialization
def _midpoint(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    # Half a unit inside the finite bound when the other one is infinite.
    return np.where(np.isinf(lo), hi - 0.5, np.where(np.isinf(hi), lo + 0.5, (lo + hi) / 2.0))


def _initial_pseudo_obs(rng, data: DataMatrix, d: int, theta: Optional[np.ndarray], hp: Hyperparams) -> np.ndarray:
    spec = data.specs[d]
    x = data.cells[:, d]
    obs = ~data.missing[:, d]
    out = rng.normal(0.0, math.sqrt(hp.sigma_y2), size=(data.n_rows, spec.width))
    if not obs.any():
        return out

    if spec.kind.is_continuous:
        out[obs, 0] = lik.map_inverse(x[obs], spec, spec.kind)
    elif spec.kind == AttributeKind.ORDINAL:
        edges = lik.threshold_edges(theta)
        xi = x[obs].astype(int)
        out[obs, 0] = _midpoint(edges[xi - 1], edges[xi])
    elif spec.kind == AttributeKind.COUNT:
        lo, hi = lik.count_bounds(x[obs], spec)
        out[obs, 0] = _midpoint(lo, hi)
    else:
        block = np.full((int(obs.sum()), spec.width), -0.5)
        block[np.arange(block.shape[0]), x[obs].astype(int) - 1] = 0.5
        out[obs] = block
    return out


def init_state(data: DataMatrix, hp: Hyperparams, rng: Optional[np.random.Generator] = None,
               pinned: Optional[np.ndarray] = None) -> LatentState:
    rng = rng if rng is not None else randkit.make_rng(hp.seed)
    N = data.n_rows
    fixed = 1 if hp.bias else 0
    K = fixed + hp.K_init
    if K > hp.K_max:
        raise ModelError(f"K_init + bias = {K} exceeds K_max = {hp.K_max}")

    Z = np.zeros((N, K))
    if hp.bias:
        Z[:, 0] = 1.0
    Z[:, fixed:] = rng.random((N, hp.K_init)) < 0.5
    pinned = np.zeros(N, dtype=bool) if pinned is None else np.asarray(pinned, dtype=bool)
    Z[pinned, fixed:] = 0.0

    slices, start = [], 0
    for spec in data.specs:
        slices.append(slice(start, start + spec.width))
        start += spec.width

    theta = []
    for spec in data.specs:
        if spec.kind == AttributeKind.ORDINAL:
            theta.append(np.arange(spec.n_categories - 1) * math.sqrt(hp.sigma_theta2) / 2.0)
        else:
            theta.append(None)

    Y = np.empty((N, start))
    for d in range(data.n_cols):
        Y[:, slices[d]] = _initial_pseudo_obs(rng, data, d, theta[d], hp)

    P, lam = linalg.natural_params(Z, Y, hp.sigma_B2)
    return LatentState(
        Z=Z, B=np.zeros((K, start)), Y=Y, theta=theta,
        sigma2=np.full(data.n_cols, hp.sigma_y2), P=P, lam=lam,
        specs=list(data.specs), hp=hp, slices=slices, pinned=pinned,
    )


# Natural parameters
def recompute_natural_params(state: LatentState) -> Tuple[np.ndarray, np.ndarray]:
    return linalg.natural_params(state.Z, state.Y, state.hp.sigma_B2)


def refresh_natural_params(state: LatentState) -> LatentState:
    """Rebuild P, lam, the Cholesky factor and P^{-1} from Z and Y."""
    state.P, state.lam = recompute_natural_params(state)
    state.L = linalg.factor(state.P)
    state.Q = linalg.inverse_from_factor(state.L)
    return state


def _ensure_factor(state: LatentState) -> None:
    if state.L is None:
        state.L = linalg.factor(state.P)


def _ensure_inverse(state: LatentState) -> None:
    _ensure_factor(state)
    if state.Q is None:
        state.Q = linalg.inverse_from_factor(state.L)


# Row updates of Z
@dataclass
class _Row:
    n: int
    z_old: np.ndarray
    z: np.ndarray
    y: np.ndarray
    Q: np.ndarray  # inverse of P without row n
    M: np.ndarray  # posterior mean of B without row n
    births: int = 0


def _remove_row(state: LatentState, n: int) -> _Row:
    _ensure_inverse(state)
    z = state.Z[n].copy()
    y = state.Y[n].copy()
    state.P -= np.outer(z, z)
    state.lam -= np.outer(z, y)
    Q = linalg.sherman_morrison(state.Q, z, -1.0)
    return _Row(n=n, z_old=z.copy(), z=z, y=y, Q=Q, M=Q @ state.lam)


def _restore_row(state: LatentState, row: _Row) -> None:
    z = row.z
    state.Z[row.n] = z
    state.P += np.outer(z, z)
    state.lam += np.outer(z, row.y)
    state.Q = linalg.sherman_morrison(row.Q, z, 1.0)
    if row.births or state.L is None:
        state.L = None
    elif not np.array_equal(z, row.z_old):
        linalg.chol_update(state.L, z)
        linalg.chol_downdate(state.L, row.z_old)


def _row_loglik(y: np.ndarray, mean: np.ndarray, var: float, s2: np.ndarray) -> float:
    total = var + s2
    return -0.5 * float(np.sum(LOG_2PI + np.log(total) + (y - mean) ** 2 / total))


def _flip_log_odds(y, z, k, prior, mean_op, var_op, s2) -> float:
    """log p(z_k = 1) - log p(z_k = 0) for the row predictive N(z mean_op, z var_op z' + s2)."""
    a = z.copy()
    a[k] = 0.0
    Va = var_op @ a
    mean0 = a @ mean_op
    var0 = a @ Va
    ll0 = _row_loglik(y, mean0, var0, s2)
    ll1 = _row_loglik(y, mean0 + mean_op[k], var0 + 2.0 * Va[k] + var_op[k, k], s2)
    return math.log(prior) - math.log1p(-prior) + ll1 - ll0


def _column_counts(state: LatentState) -> np.ndarray:
    # P without row n has diagonal m_{-n,k} + 1/sigma_B^2.
    return np.rint(np.diag(state.P) - 1.0 / state.hp.sigma_B2)


def _flip_features(rng, state: LatentState, row: _Row) -> None:
    N = state.n_rows
    s2 = state.column_variances()
    counts = _column_counts(state)
    z = row.z
    for k in range(state.n_fixed, state.K_plus):
        if counts[k] <= 0:
            z[k] = 0.0
            continue
        log_odds = _flip_log_odds(row.y, z, k, counts[k] / N, row.M, row.Q, s2)
        z[k] = float(rng.random() < expit(log_odds))


def _append_features(state: LatentState, row: _Row, k_new: int) -> None:
    N, S = state.Y.shape
    K = state.K_plus
    sigma_B2 = state.hp.sigma_B2

    state.Z = np.hstack([state.Z, np.zeros((N, k_new))])
    state.B = np.vstack([state.B, np.zeros((k_new, S))])
    state.lam = np.vstack([state.lam, np.zeros((k_new, S))])
    P = np.zeros((K + k_new, K + k_new))
    P[:K, :K] = state.P
    P[K:, K:] = np.eye(k_new) / sigma_B2
    state.P = P

    Q = np.zeros_like(P)
    Q[:K, :K] = row.Q
    Q[K:, K:] = np.eye(k_new) * sigma_B2
    row.Q = Q
    row.M = np.vstack([row.M, np.zeros((k_new, S))])
    row.z = np.concatenate([row.z, np.ones(k_new)])
    row.z_old = np.concatenate([row.z_old, np.zeros(k_new)])
    row.births += k_new


def _births(rng, state: LatentState, row: _Row) -> int:
    hp = state.hp
    N = state.n_rows
    limit = min(hp.max_births, hp.K_max - state.K_plus)
    if limit <= 0 or hp.alpha == 0:
        return 0
    rate = hp.alpha / N

    if hp.birth == BirthMode.PRIOR:
        drawn = randkit.poisson_sample(rng, rate)
        k_new = min(drawn, limit)
        if drawn > k_new:
            logger.debug("Row %d: clipped %d new features to %d (K_max)", row.n, drawn, k_new)
    else:
        s2 = state.column_variances()
        Qz = row.Q @ row.z
        mean = row.z @ row.M
        var = row.z @ Qz
        ks = np.arange(limit + 1)
        log_w = ks * math.log(rate) - rate - gammaln(ks + 1)
        log_w += np.array([_row_loglik(row.y, mean, var + k * hp.sigma_B2, s2) for k in ks])
        p = np.exp(log_w - log_w.max())
        k_new = int(rng.choice(ks, p=p / p.sum()))

    if k_new:
        _append_features(state, row, k_new)
    return k_new


def sample_z_row(rng, state: LatentState, n: int) -> LatentState:
    if state.pinned[n]:
        return state
    row = _remove_row(state, n)
    _flip_features(rng, state, row)
    _restore_row(state, row)
    return state


def birth_features(rng, state: LatentState, n: int) -> LatentState:
    if state.pinned[n]:
        return state
    row = _remove_row(state, n)
    _births(rng, state, row)
    _restore_row(state, row)
    return state


def _update_row(rng, state: LatentState, n: int) -> None:
    if state.pinned[n]:
        return
    row = _remove_row(state, n)
    _flip_features(rng, state, row)
    _births(rng, state, row)
    _restore_row(state, row)


def flip_probability(state: LatentState, n: int, k: int, printed_form: bool = False) -> float:
    """p(z_nk = 1 | Y, Z_-nk) without sampling.

    `printed_form=True` evaluates the predictive with mean z lam and variance
    z P z' + sigma^2 (no inverse of P), for comparison with the corrected form.
    """
    work = state.copy()
    row = _remove_row(work, n)
    counts = _column_counts(work)
    if k < work.n_fixed:
        return 1.0
    if counts[k] <= 0:
        return 0.0
    s2 = work.column_variances()
    if printed_form:
        log_odds = _flip_log_odds(row.y, row.z, k, counts[k] / work.n_rows, work.lam, work.P, s2)
    else:
        log_odds = _flip_log_odds(row.y, row.z, k, counts[k] / work.n_rows, row.M, row.Q, s2)
    return float(expit(log_odds))


def prune_features(state: LatentState) -> LatentState:
    fixed = state.n_fixed
    empty = np.flatnonzero(state.Z[:, fixed:].sum(axis=0) == 0) + fixed
    if empty.size == 0:
        return state
    keep = np.setdiff1d(np.arange(state.K_plus), empty)
    grid = np.ix_(keep, keep)
    state.Z = state.Z[:, keep]
    state.B = state.B[keep]
    state.lam = state.lam[keep]
    state.P = state.P[grid]
    # Empty features are decoupled in P, so the factor and inverse shrink exactly.
    if state.L is not None:
        state.L = state.L[grid]
    if state.Q is not None:
        state.Q = state.Q[grid]
    logger.debug("Pruned %d empty features, K_plus=%d", empty.size, state.K_plus)
    return state


# Per-attribute updates
def sample_weights(rng, state: LatentState, d: int) -> LatentState:
    if state.K_plus == 0:
        return state
    _ensure_factor(state)
    cols = state.slices[d]
    mean = cho_solve((state.L, True), state.lam[:, cols])
    noise = solve_triangular(state.L, rng.standard_normal(mean.shape), lower=True, trans="T")
    draw = mean + noise
    if state.specs[d].kind == AttributeKind.CATEGORICAL:
        draw[:, -1] = 0.0
    state.B[:, cols] = draw
    return state


def _sample_categorical(rng, mean: np.ndarray, y: np.ndarray, target: np.ndarray, sigma: float) -> np.ndarray:
    """One systematic scan over the R_d pseudo-observations of every row."""
    n, R = y.shape
    rows = np.arange(n)
    for r in range(R):
        is_target = target == r
        if is_target.any():
            others = y[is_target].copy()
            others[:, r] = -np.inf
            y[is_target, r] = randkit.trunc_normal(rng, mean[is_target, r], sigma, others.max(axis=1), np.inf)
        rest = ~is_target
        if rest.any():
            y[rest, r] = randkit.trunc_normal(rng, mean[rest, r], sigma, -np.inf, y[rows[rest], target[rest]])
    return y


def _sample_pseudo_rows(rng, state: LatentState, data: DataMatrix, d: int, rows: np.ndarray) -> None:
    spec = state.specs[d]
    cols = state.slices[d]
    hp = state.hp
    sigma2 = state.sigma2[d]
    sigma = math.sqrt(sigma2)

    Zr = state.Z[rows]
    mean = Zr @ state.B[:, cols]
    old = state.Y[rows, cols]
    new = old.copy()
    x = data.cells[rows, d]
    miss = data.missing[rows, d]
    obs = ~miss

    if miss.any():
        new[miss] = mean[miss] + sigma * rng.standard_normal((int(miss.sum()), spec.width))
    if obs.any():
        if spec.kind.is_continuous:
            precision = 1.0 / sigma2 + 1.0 / hp.sigma_u2
            target = lik.map_inverse(x[obs], spec, spec.kind)
            centre = (mean[obs, 0] / sigma2 + target / hp.sigma_u2) / precision
            new[obs, 0] = centre + rng.standard_normal(int(obs.sum())) / math.sqrt(precision)
        elif spec.kind == AttributeKind.ORDINAL:
            edges = lik.threshold_edges(state.theta[d])
            xi = x[obs].astype(int)
            new[obs, 0] = randkit.trunc_normal(rng, mean[obs, 0], sigma, edges[xi - 1], edges[xi])
        elif spec.kind == AttributeKind.COUNT:
            lo, hi = lik.count_bounds(x[obs], spec)
            # interval is [lo, hi); keep draws strictly below hi
            new[obs, 0] = randkit.trunc_normal(rng, mean[obs, 0], sigma, lo, np.nextafter(hi, -np.inf))
        else:
            new[obs] = _sample_categorical(rng, mean[obs], new[obs], x[obs].astype(int) - 1, sigma)

    state.Y[rows, cols] = new
    state.lam[:, cols] += Zr.T @ (new - old)


def sample_pseudo_obs(rng, state: LatentState, data: DataMatrix, n: int, d: int) -> LatentState:
    _sample_pseudo_rows(rng, state, data, d, np.array([n]))
    return state


def sample_thresholds(rng, state: LatentState, data: DataMatrix, d: int) -> LatentState:
    spec = state.specs[d]
    if spec.kind != AttributeKind.ORDINAL or spec.n_categories <= 2:
        return state
    theta = state.theta[d]
    R = spec.n_categories
    y = state.Y[:, state.slices[d]][:, 0]
    obs = ~data.missing[:, d]
    x = data.cells[:, d]
    sd = math.sqrt(state.hp.sigma_theta2)

    # theta[i] holds theta_{i+1}; theta_1 stays at zero.
    for r in range(2, R):
        below = y[obs & (x == r)]
        above = y[obs & (x == r + 1)]
        lo = max(theta[r - 2], below.max() if below.size else -np.inf)
        hi = min(theta[r] if r < R - 1 else np.inf, above.min() if above.size else np.inf)
        if np.isfinite(hi):
            hi = np.nextafter(hi, -np.inf)
        if not lo < hi:
            raise ModelError(f"attribute '{spec.name}': empty interval for threshold {r} ({lo}, {hi})")
        theta[r - 1] = randkit.trunc_normal_sample(rng, 0.0, sd, lo, hi)
    return state


def sample_noise_variance(rng, state: LatentState, d: int) -> LatentState:
    hp = state.hp
    if not hp.sample_variance:
        return state
    cols = state.slices[d]
    resid = state.Y[:, cols] - state.Z @ state.B[:, cols]
    shape = hp.beta1 + resid.size / 2.0
    rate = hp.beta2 + float(np.sum(resid ** 2)) / 2.0
    state.sigma2[d] = randkit.inverse_gamma_sample(rng, shape, rate)
    return state


# Log joint
def ibp_log_prior(Z: np.ndarray, alpha: float) -> float:
    """log P([Z]) of the left-ordered equivalence class under IBP(alpha)."""
    N = Z.shape[0]
    harmonic = float(np.sum(1.0 / np.arange(1, N + 1)))
    m = Z.sum(axis=0)
    Z = Z[:, m > 0]
    m = m[m > 0]
    K = Z.shape[1]
    if K == 0:
        return -alpha * harmonic
    if alpha == 0:
        return -np.inf
    _, repeats = np.unique(Z.T, axis=0, return_counts=True)
    return float(
        K * math.log(alpha) - gammaln(repeats + 1).sum() - alpha * harmonic
        + np.sum(gammaln(N - m + 1) + gammaln(m) - gammaln(N + 1))
    )


def log_joint(state: LatentState) -> float:
    """log p(Z) + log p(B) + log p(Y | Z, B) + log p(theta) (free thresholds only)."""
    hp = state.hp
    lp = ibp_log_prior(state.Z[:, state.n_fixed:], hp.alpha)

    free = np.ones(state.B.shape[1], dtype=bool)
    for d, spec in enumerate(state.specs):
        if spec.kind == AttributeKind.CATEGORICAL:
            free[state.slices[d].stop - 1] = False
    B = state.B[:, free]
    lp += -0.5 * float(np.sum(LOG_2PI + math.log(hp.sigma_B2) + B ** 2 / hp.sigma_B2))

    s2 = state.column_variances()
    resid = state.Y - state.Z @ state.B
    lp += -0.5 * float(np.sum(LOG_2PI + np.log(s2) + resid ** 2 / s2))

    for theta in state.theta:
        if theta is not None and theta.size > 1:
            lp += -0.5 * float(np.sum(LOG_2PI + math.log(hp.sigma_theta2) + theta[1:] ** 2 / hp.sigma_theta2))
    return lp


# Sweeps and chains
def run_iteration(rng, state: LatentState, data: DataMatrix) -> LatentState:
    _ensure_factor(state)
    state.Q = linalg.inverse_from_factor(state.L)
    for n in range(state.n_rows):
        _update_row(rng, state, n)
    prune_features(state)

    all_rows = np.arange(state.n_rows)
    for d in range(state.n_dims):
        sample_weights(rng, state, d)
        _sample_pseudo_rows(rng, state, data, d, all_rows)
        sample_thresholds(rng, state, data, d)
        sample_noise_variance(rng, state, d)
    return state


def run_chain(data: DataMatrix, hp: Hyperparams, rng: Optional[np.random.Generator] = None,
              pinned: Optional[np.ndarray] = None, progress: bool = False,
              initial: Optional[LatentState] = None) -> Tuple[LatentState, Trace]:
    """Run sweeps up to `hp.iterations` in total.

    With `initial` the chain resumes from that state: its generator state is
    restored and the sweep count continues from `initial.iteration`. The
    natural parameters are rebuilt first, so a chain resumed on a refresh
    boundary reproduces the uninterrupted one exactly.
    """
    if initial is None:
        rng = rng if rng is not None else randkit.make_rng(hp.seed)
        state = init_state(data, hp, rng, pinned)
    else:
        if initial.iteration > hp.iterations:
            raise ModelError(f"state already ran {initial.iteration} sweeps, more than the {hp.iterations} requested")
        if initial.n_rows != data.n_rows:
            raise ModelError("the state to resume was learned on a table with a different number of rows")
        if rng is None:
            rng = randkit.restore_rng(initial.rng_state) if initial.rng_state else randkit.make_rng(hp.seed)
        state = initial.copy()
        state.hp = hp
        refresh_natural_params(state)
    trace = Trace()
    log_every = max(1, hp.iterations // 10)

    sweeps = range(state.iteration + 1, hp.iterations + 1)
    for it in tqdm(sweeps, desc="gibbs", unit="sweep", disable=not progress):
        if it > 1 and (it - 1) % hp.refresh_every == 0:
            refresh_natural_params(state)
        run_iteration(rng, state, data)
        state.iteration = it
        trace.records.append(TraceRecord(
            iteration=it, k_plus=state.K_plus, log_joint=log_joint(state), sigma2=state.sigma2.tolist(),
        ))
        if it > hp.burn_in and it > hp.iterations - hp.keep_last:
            trace.samples.append(state.copy())
        if it % log_every == 0:
            logger.info("sweep %d/%d: K_plus=%d log_joint=%.4f", it, hp.iterations, state.K_plus, trace.records[-1].log_joint)

    state.rng_state = randkit.rng_state(rng)
    return state, trace


def _run_chain_worker(data: DataMatrix, hp: Hyperparams, pinned: Optional[np.ndarray]) -> Tuple[LatentState, Trace]:
    return run_chain(data, hp, pinned=pinned)


def run_chains(data: DataMatrix, hp: Hyperparams, chains: int = 1, pinned: Optional[np.ndarray] = None,
               progress: bool = False) -> Tuple[LatentState, Trace]:
    """Independent chains in a process pool; the one with the highest final log joint wins."""
    if chains == 1:
        return run_chain(data, hp, pinned=pinned, progress=progress)
    configs = [hp.model_copy(update={"seed": seed}) for seed in randkit.spawn_seeds(hp.seed, chains)]
    workers = min(chains, os.cpu_count() or 1)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_run_chain_worker, [data] * chains, configs, [pinned] * chains))
    best = max(range(chains), key=lambda i: results[i][1].final_log_joint)
    logger.info("Kept chain %d of %d (final log joint %.4f)", best, chains, results[best][1].final_log_joint)
    return results[best]
