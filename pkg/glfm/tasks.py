import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from glfm import likelihoods as lik
from glfm import randkit, sampler
from glfm.data import decode_cell, fit_transforms, format_cell, invert_preprocess, apply_preprocess, \
    mask_heldout, preprocess_log_jacobian
from glfm.exceptions import DataError, ModelError
from glfm.models import AttributeKind, DataMatrix, LatentState, Trace
from glfm.schemas import BenchmarkReport, HeldoutScore, Hyperparams, Pattern

logger = logging.getLogger(__name__)

# Count PDFs enumerate 0..max_count * 4 + 100.
COUNT_SUPPORT_FACTOR = 4
COUNT_SUPPORT_MARGIN = 100


@dataclass
class CompletionResult:
    """Completed table (text, input schema) with the state it was imputed from."""

    x_map: pd.DataFrame
    hidden: LatentState
    trace: Trace


# MAP estimates
def _map_encoded(z: np.ndarray, state: LatentState, d: int) -> float:
    spec = state.specs[d]
    sigma = math.sqrt(state.sigma2[d])
    m = np.asarray(z, dtype=float) @ state.B_d(d)

    if spec.kind == AttributeKind.CATEGORICAL:
        # argmax returns the first maximum, i.e. ties go to the lowest category
        return float(np.argmax(lik.categorical_probs(m, sigma, state.hp.gh_nodes)) + 1)
    if spec.kind == AttributeKind.ORDINAL:
        return float(np.argmax(lik.ordinal_probs(m[0], state.theta[d], sigma)) + 1)
    if spec.kind == AttributeKind.COUNT:
        centre = float(np.floor(lik.map_forward(m[0], spec, spec.kind)))
        candidates = np.clip(centre + np.arange(-1, 2), 0, None)
        candidates = np.unique(candidates)
        probs = lik.prob_count(candidates, m[0], spec, sigma)
        return float(candidates[np.argmax(probs)])
    return float(lik.map_forward(m[0], spec, spec.kind))


def compute_map(z: np.ndarray, state: LatentState, d: int):
    """MAP of attribute d for latent row z, decoded to original units or label."""
    if state is None or state.B.shape[0] != len(z):
        raise ModelError("compute_map needs a learned state matching the latent row")
    return decode_cell(state.specs[d], _map_encoded(z, state, d))


# Completion
def complete(data: DataMatrix, hp: Hyperparams, chains: int = 1, pinned: Optional[np.ndarray] = None,
             progress: bool = False) -> CompletionResult:
    if not data.missing.any():
        logger.warning("No missing cells: the completed table equals the input")

    state, trace = sampler.run_chains(data, hp, chains, pinned=pinned, progress=progress)
    rows = [list(row) for row in data.raw]
    for n, d in zip(*np.nonzero(data.missing)):
        rows[n][d] = format_cell(compute_map(state.Z[n], state, d))

    frame = pd.DataFrame(rows, columns=data.header or data.names)
    return CompletionResult(x_map=frame, hidden=state, trace=trace)


# Held-out scoring
def _cell_logliks(state: LatentState, data: DataMatrix, d: int, rows: np.ndarray) -> np.ndarray:
    spec = state.specs[d]
    m = state.Z[rows] @ state.B_d(d)
    if spec.kind != AttributeKind.CATEGORICAL:
        m = m[:, 0]
    return lik.loglik_cell(
        data.cells[rows, d], m, spec, state.sigma2[d], state.hp.sigma_u2, state.theta[d], state.hp.gh_nodes,
    )


def predictive_loglik(states: Union[LatentState, Sequence[LatentState]], data: DataMatrix,
                      heldout_mask: np.ndarray) -> HeldoutScore:
    """Average log-likelihood per held-out cell.

    `data` must still hold the true values at the held-out cells. With several
    states the likelihood (not its log) is averaged across them.
    """
    if isinstance(states, LatentState):
        states = [states]
    heldout_mask = np.asarray(heldout_mask, dtype=bool)
    if not heldout_mask.any():
        raise DataError("held-out mask is empty")
    if np.any(data.missing & heldout_mask):
        raise DataError("held-out cells must be observed in the reference data")

    per_dimension = {}
    total, count = 0.0, 0
    for d, spec in enumerate(data.specs):
        rows = np.flatnonzero(heldout_mask[:, d])
        if rows.size == 0:
            continue
        scores = np.stack([_cell_logliks(state, data, d, rows) for state in states])
        cell = logsumexp(scores, axis=0) - math.log(len(states))
        per_dimension[spec.name] = float(cell.mean())
        total += float(cell.sum())
        count += rows.size

    return HeldoutScore(average=total / count, per_dimension=per_dimension, n_cells=count)


def benchmark(data: DataMatrix, hp: Hyperparams, fraction: float, splits: int = 1, chains: int = 1,
              fit_transform: bool = True, pinned: Optional[np.ndarray] = None,
              progress: bool = False) -> BenchmarkReport:
    """Repeated MCAR splits: hide `fraction` of the observed cells, fit, score the hidden cells."""
    if not 0 < fraction < 1:
        raise DataError("held-out fraction must lie in (0, 1)")
    seeds = randkit.spawn_seeds(hp.seed, 2 * splits)
    scores = []
    for s in range(splits):
        train, hidden = mask_heldout(randkit.make_rng(seeds[2 * s]), data, fraction)
        if fit_transform:
            train = fit_transforms(train)
        split_hp = hp.model_copy(update={"seed": seeds[2 * s + 1]})
        state, trace = sampler.run_chains(train, split_hp, chains, pinned=pinned, progress=progress)
        kept = trace.samples or [state]
        score = predictive_loglik(kept, data, hidden)
        logger.info("split %d/%d: %d held-out cells, average log-likelihood %.4f", s + 1, splits, score.n_cells, score.average)
        scores.append(score)

    names = sorted({name for score in scores for name in score.per_dimension})
    per_dimension_mean = {
        name: float(np.mean([sc.per_dimension[name] for sc in scores if name in sc.per_dimension])) for name in names
    }
    return BenchmarkReport(
        heldout_fraction=fraction,
        splits=scores,
        mean=float(np.mean([sc.average for sc in scores])),
        per_dimension_mean=per_dimension_mean,
    )


# Exploration
def _default_grid(spec, m: float, sd: float, points: int) -> np.ndarray:
    if spec.value_min is not None and spec.value_max is not None and spec.value_max > spec.value_min:
        lo, hi = spec.value_min, spec.value_max
    else:
        ends = lik.map_forward(np.array([m - 4 * sd, m + 4 * sd]), spec, spec.kind)
        lo, hi = sorted(invert_preprocess(ends, spec.preprocess))
        if hi <= lo:
            hi = lo + 1.0
    pad = 0.1 * (hi - lo)
    grid = np.linspace(lo - pad, hi + pad, points)
    return grid[_in_domain(spec, grid)]


def _in_domain(spec, grid: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore", divide="ignore"):
        x = apply_preprocess(grid, spec.preprocess)
    ok = np.isfinite(x)
    if spec.kind == AttributeKind.POSITIVE_REAL:
        ok &= x > 0
    return ok


def compute_pdf(pattern: Union[Pattern, Sequence[int]], d: int, state: LatentState,
                grid: Optional[np.ndarray] = None, grid_points: int = 200) -> List[Tuple[object, float]]:
    """Distribution of attribute d for objects carrying `pattern`, in original units."""
    if not 0 <= d < state.n_dims:
        raise DataError(f"attribute index {d} outside 0..{state.n_dims - 1}")
    bits = np.asarray(pattern.bits if isinstance(pattern, Pattern) else pattern, dtype=float)
    if bits.size != state.K_plus:
        raise DataError(f"pattern has {bits.size} features, the state has {state.K_plus}")

    spec = state.specs[d]
    sigma = math.sqrt(state.sigma2[d])
    m = bits @ state.B_d(d)

    if spec.kind == AttributeKind.CATEGORICAL:
        probs = lik.categorical_probs(m, sigma, state.hp.gh_nodes)
        return [(decode_cell(spec, r + 1), float(p)) for r, p in enumerate(probs)]
    if spec.kind == AttributeKind.ORDINAL:
        probs = lik.ordinal_probs(m[0], state.theta[d], sigma)
        return [(decode_cell(spec, r + 1), float(p)) for r, p in enumerate(probs)]
    if spec.kind == AttributeKind.COUNT:
        support = np.arange((spec.max_count or 0) * COUNT_SUPPORT_FACTOR + COUNT_SUPPORT_MARGIN + 1)
        probs = lik.prob_count(support, m[0], spec, sigma)
        return [(int(x), float(p)) for x, p in zip(support, probs)]

    if grid is None:
        grid = _default_grid(spec, m[0], math.sqrt(state.sigma2[d] + state.hp.sigma_u2), grid_points)
    else:
        grid = np.asarray(grid, dtype=float)
        if grid.ndim != 1 or not np.all(_in_domain(spec, grid)):
            raise DataError(f"grid for '{spec.name}' must be one-dimensional and inside the attribute domain")
    x = apply_preprocess(grid, spec.preprocess)
    log_density = lik.loglik_continuous(x, m[0], state.sigma2[d] + state.hp.sigma_u2, spec, spec.kind)
    density = np.exp(log_density + preprocess_log_jacobian(grid, spec.preprocess))
    return [(float(v), float(p)) for v, p in zip(grid, density)]


def extract_patterns(state: LatentState, top_k: int = 10) -> Tuple[List[Pattern], List[float]]:
    """Most frequent rows of Z and the marginal activation probability of each feature."""
    N = state.n_rows
    rows, counts = np.unique(state.Z.astype(int), axis=0, return_counts=True)
    # most frequent first; equal counts in lexicographic order of the bits
    order = sorted(range(len(counts)), key=lambda i: (-counts[i], tuple(rows[i])))
    patterns = [
        Pattern(bits=tuple(int(b) for b in rows[i]), empirical_prob=counts[i] / N, count=int(counts[i]), bias=state.hp.bias)
        for i in order[:top_k]
    ]
    feature_probs = state.Z[:, state.n_fixed:].mean(axis=0).tolist() if N else []
    return patterns, feature_probs


def empirical_distribution(data: DataMatrix, d: int, bins: int = 30) -> List[Tuple[object, float]]:
    """Distribution of the observed values of attribute d over the whole table."""
    spec = data.specs[d]
    values = data.cells[~data.missing[:, d], d]
    if values.size == 0:
        return []
    if spec.kind.is_discrete_finite:
        counts = np.bincount(values.astype(int), minlength=spec.n_categories + 1)[1:]
        return [(decode_cell(spec, r + 1), float(c / values.size)) for r, c in enumerate(counts)]
    if spec.kind == AttributeKind.COUNT:
        counts = np.bincount(values.astype(int))
        return [(int(x), float(c / values.size)) for x, c in enumerate(counts)]
    original = invert_preprocess(values, spec.preprocess)
    density, edges = np.histogram(original, bins=bins, density=True)
    centres = (edges[:-1] + edges[1:]) / 2.0
    return [(float(v), float(p)) for v, p in zip(centres, density)]
