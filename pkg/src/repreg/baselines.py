"""Reference estimators: the full-data MLE and a divide-and-conquer aggregate."""

from __future__ import annotations

import warnings

import numpy as np

from .errors import AggregationError, ConfigError, DomainError, RankError
from .glm import DEFAULT_MAX_ITER, DEFAULT_TOL, Dataset, FitResult, GlmFamily, fit, solve_spd
from .simgen import make_rng


def full_fit(data: Dataset, family: GlmFamily, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> FitResult:
    """Unit-weight fit over all rows (a single WLS solve for the linear model)."""
    res = fit(data, family, tol=tol, max_iter=max_iter)
    res.extra.update({"method": "full", "points": data.n})
    return res


def random_blocks(n: int, blocks: int, seed: int = 0) -> np.ndarray:
    """Block label per row for a random split into ``blocks`` equal-size
    blocks; the ``n mod blocks`` leftover rows go round-robin to blocks 0, 1, ..."""
    if blocks < 1 or blocks > n:
        raise ConfigError(f"need 1 <= blocks <= N, got blocks={blocks}, N={n}")
    perm = make_rng(seed).permutation(n)
    base = n // blocks
    pos_block = np.empty(n, dtype=np.int64)
    pos_block[: base * blocks] = np.arange(base * blocks) // base
    pos_block[base * blocks :] = np.arange(n - base * blocks)
    labels = np.empty(n, dtype=np.int64)
    labels[perm] = pos_block
    return labels


def aggregate(betas, infos) -> np.ndarray:
    """Information-weighted average (sum I_k)^{-1} sum I_k beta_k, summed in list order."""
    I = np.zeros_like(infos[0])
    v = np.zeros_like(betas[0])
    for b, info in zip(betas, infos):
        I += info
        v += info @ b
    return solve_spd(I, v)


def dc_fit(
    data: Dataset,
    family: GlmFamily,
    blocks: int,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FitResult:
    """Fit each random block separately and combine with information weights.

    Blocks whose fit is rank-deficient, leaves the link domain or fails to
    converge are dropped; the count is in ``extra['dropped_blocks']``.
    """
    labels = random_blocks(data.n, blocks, seed)
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(blocks + 1))
    betas, infos, iters = [], [], 0
    dropped = 0
    for k in range(blocks):
        rows = order[bounds[k] : bounds[k + 1]]
        try:
            r = fit(data.subset(rows), family, tol=tol, max_iter=max_iter)
        except (RankError, DomainError):
            dropped += 1
            continue
        if not r.converged:
            dropped += 1
            continue
        betas.append(r.beta)
        infos.append(r.fisher_information)
        iters = max(iters, r.iterations)
    if not betas:
        raise AggregationError(f"all {blocks} divide-and-conquer blocks failed")
    if dropped:
        warnings.warn(f"divide-and-conquer dropped {dropped} of {blocks} blocks", RuntimeWarning, stacklevel=2)
    info = np.sum(infos, axis=0)
    return FitResult(
        beta=aggregate(betas, infos),
        iterations=iters,
        converged=True,
        final_score_norm=float("nan"),
        fisher_information=info,
        extra={"method": "dc", "blocks": blocks, "dropped_blocks": dropped, "points": len(betas)},
    )
