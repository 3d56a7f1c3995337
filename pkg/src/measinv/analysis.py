"""Statistical diagnostics on simulated data: sampling error and floors.

Histogram a chaotic trajectory twice from independent subsamples and the
transport distance between the two copies measures pure Monte Carlo
error; it should shrink like N^(-1/2) in the W_p distance. The same
construction at the full sample size estimates the model-discrepancy
floor below which an inversion is fitting noise.
"""

from __future__ import annotations

import numpy as np

from .grid import Grid
from .ot import CostSpec, sinkhorn
from .simulate import occupation_histogram, subsample

__all__ = ["pair_misfit", "mc_convergence_sweep", "estimate_loss_floor"]


def pair_misfit(
    states: np.ndarray, grid: Grid, n: int, cost: CostSpec, seed_a: int, seed_b: int
) -> float:
    """W_p distance between histograms of two independent n-subsamples."""
    ha, _ = occupation_histogram(subsample(states, n, seed=seed_a), grid)
    hb, _ = occupation_histogram(subsample(states, n, seed=seed_b), grid)
    value = sinkhorn(ha.normalized(), hb.normalized(), cost).cost
    return max(value, 0.0) ** (1.0 / cost.p)


def mc_convergence_sweep(
    states: np.ndarray,
    grid: Grid,
    sizes,
    cost: CostSpec,
    seed: int = 0,
    pairs: int = 3,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Self-misfit vs subsample size and the fitted log-log slope.

    Returns (sizes, mean misfits, slope). Each size is measured as the
    average over `pairs` independent subsample pairs.
    """
    sizes = np.asarray(list(sizes), dtype=int)
    if sizes.size < 2:
        raise ValueError("need at least two subsample sizes to fit a slope")
    rng = np.random.default_rng(seed)
    misfits = np.empty(sizes.size)
    for i, n in enumerate(sizes):
        vals = []
        for _ in range(pairs):
            sa, sb = rng.integers(0, 2**31 - 1, size=2)
            vals.append(pair_misfit(states, grid, int(n), cost, int(sa), int(sb)))
        misfits[i] = float(np.mean(vals))
    slope = float(np.polyfit(np.log(sizes), np.log(misfits), 1)[0])
    return sizes, misfits, slope


def estimate_loss_floor(
    states: np.ndarray, grid: Grid, cost: CostSpec, seed: int = 0, pairs: int = 3
) -> float:
    """Half-sample bootstrap estimate of the attainable loss floor.

    Splits the record into disjoint halves, histograms each, and
    averages the transport cost between the halves over independent
    splits. An inversion against this data cannot meaningfully push the
    loss below this value.
    """
    states = np.asarray(states, dtype=float)
    n = states.shape[0]
    if n < 4:
        raise ValueError("need at least 4 states to split into halves")
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(pairs):
        perm = rng.permutation(n)
        half = n // 2
        ha, _ = occupation_histogram(states[perm[:half]], grid)
        hb, _ = occupation_histogram(states[perm[half : 2 * half]], grid)
        vals.append(sinkhorn(ha.normalized(), hb.normalized(), cost).cost)
    return float(np.mean(vals))
