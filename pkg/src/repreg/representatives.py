"""Representative points for partitioned data.

Center representatives (mean, component-wise median, grid-cell mid-point)
replace each block by one weighted point.  Score-matching representatives
are rebuilt at every iterate ``beta`` so that each (sub-)block's
representative carries exactly the block's contribution to the score:

    sum_{i in I_k} nu(eta_i) (y_i - G(eta_i)) X_i
        = n_k nu(eta_k~) (y_k~ - G(eta_k~)) X_k~,      eta_k~ = X_k~' beta.

All constructions are vectorized over blocks; each block only ever reads its
own rows, so results for a block do not depend on which other blocks are
processed alongside it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ._io import text_sink
from .errors import ConfigError, RankError
from .glm import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    Dataset,
    FitResult,
    GlmFamily,
    WeightedData,
    fisher_scoring_fit,
    linear_predictor,
)
from .partition import PartitionSpec

FALLBACK_NAMES = ("none", "y-mean", "x-mean")
NO_FALLBACK, Y_MEAN, X_MEAN = 0, 1, 2

SIGN_TAU = 1e-12
EPS_ETA = 1e-8
EPS_D = 1e-8
GRID_POINTS = 64
SPLIT_DEPTH = 4
DEFAULT_T = 3


@dataclass
class RepresentativeSet:
    """K' weighted points with provenance.

    ``part`` is 0 for a whole block or its non-negative-eta piece, 1 for the
    negative-eta piece of a sign-split block.  ``row_point[i]`` is the index
    of the point that row ``i`` was summarized into (None when unknown).
    """

    weights: np.ndarray
    X: np.ndarray
    y: np.ndarray
    source_block: np.ndarray
    method: str
    part: np.ndarray | None = None
    fallback: np.ndarray | None = None
    eta_tilde: np.ndarray | None = None
    iteration: int = 0
    beta: np.ndarray | None = None
    row_point: np.ndarray | None = None
    columns: tuple[str, ...] = ()
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        k = self.weights.shape[0]
        if self.part is None:
            self.part = np.zeros(k, dtype=np.int64)
        if self.fallback is None:
            self.fallback = np.zeros(k, dtype=np.int64)
        if self.eta_tilde is None:
            self.eta_tilde = np.full(k, np.nan)

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def fallback_count(self) -> int:
        return int(np.count_nonzero(self.fallback))

    def fallback_labels(self) -> list[str]:
        return [FALLBACK_NAMES[c] for c in self.fallback]

    def weighted_data(self) -> WeightedData:
        return WeightedData(self.weights, self.X, self.y, self.columns)


# ----------------------------------------------------------------------
# grouping helpers
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class _Groups:
    order: np.ndarray  # rows sorted by block, stable
    starts: np.ndarray
    sizes: np.ndarray

    @classmethod
    def of(cls, part: PartitionSpec) -> "_Groups":
        order = np.argsort(part.labels, kind="stable")
        sizes = part.sizes
        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        return cls(order, starts, sizes)

    def sum(self, v: np.ndarray) -> np.ndarray:
        return np.add.reduceat(v, self.starts, axis=0)


def _check(data: Dataset, part: PartitionSpec) -> None:
    if part.n != data.n:
        raise ConfigError(f"partition covers {part.n} rows but the data has {data.n}")


def _row_point_identity(part: PartitionSpec) -> np.ndarray:
    return part.labels.copy()


# ----------------------------------------------------------------------
# center representatives
# ----------------------------------------------------------------------


def mean_representatives(data: Dataset, part: PartitionSpec) -> RepresentativeSet:
    _check(data, part)
    g = _Groups.of(part)
    n = g.sizes.astype(float)
    Xs = data.X[g.order]
    ys = data.y[g.order]
    return RepresentativeSet(
        weights=n,
        X=g.sum(Xs) / n[:, None],
        y=g.sum(ys) / n,
        source_block=np.arange(part.k),
        method="mean",
        row_point=_row_point_identity(part),
        columns=data.columns,
    )


def _block_medians(data: Dataset, part: PartitionSpec, g: _Groups) -> np.ndarray:
    out = np.empty((part.k, data.p))
    lo = g.starts + (g.sizes - 1) // 2
    hi = g.starts + g.sizes // 2
    for j in range(data.p):
        idx = np.lexsort((data.X[:, j], part.labels))
        v = data.X[idx, j]
        out[:, j] = 0.5 * (v[lo] + v[hi])
    return out


def median_representatives(data: Dataset, part: PartitionSpec) -> RepresentativeSet:
    """Component-wise block medians (even sizes average the two central
    order statistics); responses are block means."""
    _check(data, part)
    g = _Groups.of(part)
    n = g.sizes.astype(float)
    return RepresentativeSet(
        weights=n,
        X=_block_medians(data, part, g),
        y=g.sum(data.y[g.order]) / n,
        source_block=np.arange(part.k),
        method="median",
        row_point=_row_point_identity(part),
        columns=data.columns,
    )


def midpoint_representatives(data: Dataset, part: PartitionSpec) -> RepresentativeSet:
    """Grid-cell centers; outer cells are closed at the observed column
    min / max.  Columns outside the grid (e.g. the intercept) use block means."""
    _check(data, part)
    if part.method != "equal-depth" or part.cells is None:
        raise ConfigError("mid-point representatives need an equal-depth partition with grid cut points")
    g = _Groups.of(part)
    n = g.sizes.astype(float)
    X = g.sum(data.X[g.order]) / n[:, None]
    for a, j in enumerate(part.grid_columns):
        e = part.edges[a]
        c = part.cells[:, a]
        X[:, j] = 0.5 * (e[c] + e[c + 1])
    return RepresentativeSet(
        weights=n,
        X=X,
        y=g.sum(data.y[g.order]) / n,
        source_block=np.arange(part.k),
        method="mid",
        row_point=_row_point_identity(part),
        columns=data.columns,
    )


# ----------------------------------------------------------------------
# score-matching pieces (batched over sub-blocks)
# ----------------------------------------------------------------------


def _ytilde_batch(sum_nue, sum_nuey, sum_abs_nue, ybar):
    degenerate = np.abs(sum_nue) < EPS_ETA * (1.0 + sum_abs_nue)
    with np.errstate(divide="ignore", invalid="ignore"):
        yt = np.where(degenerate, ybar, sum_nuey / np.where(degenerate, 1.0, sum_nue))
    return yt, degenerate


def _s_fn(family: GlmFamily, ytil, eta):
    """S(eta) = nu(eta) (y~ - G(eta)) eta, broadcasting ``ytil`` against ``eta``."""
    with np.errstate(all="ignore"):
        return family.nu(eta) * (ytil - family.inverse_link(eta)) * eta


def _pick_nearest(roots, owner, center, m):
    """Per owner, the root nearest ``center[owner]``; ties go to the smaller root."""
    best = np.full(m, np.nan)
    if roots.size == 0:
        return best
    dist = np.abs(roots - center[owner])
    # sort by owner, then distance, then root value
    idx = np.lexsort((roots, dist, owner))
    o = owner[idx]
    first = np.ones(idx.size, dtype=bool)
    first[1:] = o[1:] != o[:-1]
    best[o[first]] = roots[idx[first]]
    return best


def _bisect(family, ytil, target, a, b, fa):
    """Bisection to full floating-point resolution on brackets [a, b] with
    f(a) = fa and a sign change; returns the endpoint with the smaller |f|."""
    a = a.copy()
    b = b.copy()
    fa = fa.copy()
    fb = _s_fn(family, ytil, b) - target
    for _ in range(200):
        mid = a + 0.5 * (b - a)
        active = (mid != a) & (mid != b)
        if not active.any():
            break
        fm = _s_fn(family, ytil, mid) - target
        left = np.signbit(fm) == np.signbit(fa)
        left &= fm != 0
        hit = fm == 0
        a = np.where(active & left, mid, a)
        fa = np.where(active & left, fm, fa)
        b = np.where(active & ~left, mid, b)
        fb = np.where(active & ~left, fm, fb)
        a = np.where(active & hit, mid, a)
        b = np.where(active & hit, mid, b)
        fa = np.where(active & hit, 0.0, fa)
        fb = np.where(active & hit, 0.0, fb)
    return np.where(np.abs(fa) <= np.abs(fb), a, b)


def _solve_eta_numeric(family, ytil, target, lo, hi, center, guard_lo=None, guard_hi=None):
    m = ytil.shape[0]
    out = np.full(m, np.nan)
    point = hi <= lo
    out[point] = lo[point]
    todo = np.flatnonzero(~point)
    if todo.size:
        t = np.linspace(0.0, 1.0, GRID_POINTS)
        grid = lo[todo, None] + (hi[todo] - lo[todo])[:, None] * t[None, :]
        grid[:, -1] = hi[todo]
        F = _s_fn(family, ytil[todo, None], grid) - target[todo, None]
        finite = np.isfinite(F)
        F = np.where(finite, F, np.nan)
        exact_r, exact_c = np.nonzero(F == 0)
        sa = np.signbit(F[:, :-1])
        sb = np.signbit(F[:, 1:])
        both = np.isfinite(F[:, :-1]) & np.isfinite(F[:, 1:])
        nz = (F[:, :-1] != 0) & (F[:, 1:] != 0)
        br_r, br_c = np.nonzero(both & nz & (sa != sb))
        roots = [grid[exact_r, exact_c]]
        owners = [todo[exact_r]]
        if br_r.size:
            owner = todo[br_r]
            r = _bisect(
                family,
                ytil[owner],
                target[owner],
                grid[br_r, br_c],
                grid[br_r, br_c + 1],
                F[br_r, br_c],
            )
            roots.append(r)
            owners.append(owner)
        roots = np.concatenate(roots)
        owners = np.concatenate(owners).astype(np.int64)
        out[todo] = _pick_nearest(roots, owners, center, m)[todo]
    missing = np.flatnonzero(np.isnan(out))
    if missing.size and guard_lo is not None:
        # bracket between the rows where S is smallest and largest
        a = guard_lo[missing]
        b = guard_hi[missing]
        fa = _s_fn(family, ytil[missing], a) - target[missing]
        fb = _s_fn(family, ytil[missing], b) - target[missing]
        ok = np.isfinite(fa) & np.isfinite(fb) & ((fa == 0) | (fb == 0) | (np.signbit(fa) != np.signbit(fb)))
        if ok.any():
            mi = missing[ok]
            r = np.where(fa[ok] == 0, a[ok], np.where(fb[ok] == 0, b[ok], np.nan))
            need = np.isnan(r)
            if need.any():
                r[need] = _bisect(family, ytil[mi[need]], target[mi[need]], a[ok][need], b[ok][need], fa[ok][need])
            out[mi] = r
    return out


def _solve_eta_quadratic(ytil, target, lo, hi, center):
    """Identity link with unit nu: (y~ - eta) eta = target, a quadratic."""
    disc = np.maximum(ytil * ytil - 4.0 * target, 0.0)
    sq = np.sqrt(disc)
    q = 0.5 * (ytil + np.copysign(sq, ytil))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = q
        r2 = np.where(q != 0, target / q, q)
    slack = 1e-12 * (1.0 + np.maximum(np.abs(lo), np.abs(hi)))
    cand = np.stack([r1, r2], axis=1)
    inside = (cand >= (lo - slack)[:, None]) & (cand <= (hi + slack)[:, None])
    dist = np.where(inside, np.abs(cand - center[:, None]), np.inf)
    # tie -> smaller root
    tie = dist[:, 0] == dist[:, 1]
    pick = np.where(tie, np.argmin(cand, axis=1), np.argmin(dist, axis=1))
    root = cand[np.arange(cand.shape[0]), pick]
    root = np.where(inside.any(axis=1), np.clip(root, lo, hi), np.nan)
    point = hi <= lo
    return np.where(point, lo, root)


def _uses_quadratic(family: GlmFamily) -> bool:
    return family.family == "normal" and family.link == "identity"


def _solve_eta_batch(family, ytil, target, lo, hi, center, guard_lo=None, guard_hi=None, method="auto"):
    if method == "auto":
        method = "quadratic" if _uses_quadratic(family) else "numeric"
    if method == "quadratic":
        if not _uses_quadratic(family):
            raise ConfigError("the closed-form root applies to the identity link with normal responses only")
        out = _solve_eta_quadratic(ytil, target, lo, hi, center)
        miss = np.isnan(out)
        if miss.any():
            out[miss] = _solve_eta_numeric(
                family, ytil[miss], target[miss], lo[miss], hi[miss], center[miss],
                None if guard_lo is None else guard_lo[miss],
                None if guard_hi is None else guard_hi[miss],
            )
    else:
        out = _solve_eta_numeric(family, ytil, target, lo, hi, center, guard_lo, guard_hi)
    failed = np.isnan(out)
    return np.where(failed, center, out), failed


def _predictor_batch(family, ytil, eta_t, s_sum, n, xbar, scale_d):
    with np.errstate(all="ignore"):
        d = family.nu(eta_t) * (ytil - family.inverse_link(eta_t))
    small = ~np.isfinite(d) | (np.abs(d) < EPS_D * (1.0 + scale_d))
    with np.errstate(all="ignore"):
        x = s_sum / (n * np.where(small, 1.0, d))[:, None]
    x = np.where(small[:, None], xbar, x)
    return x, small


MATCH_RTOL = 1e-9


def _matches_score(family, ytil, x, beta, s_sum, n):
    """True where n nu(x'b)(y~ - G(x'b)) x reproduces the block score to MATCH_RTOL."""
    with np.errstate(all="ignore"):
        eta = linear_predictor(x, beta)
        d = family.nu(eta) * (ytil - family.inverse_link(eta))
        err = np.max(np.abs(s_sum - (n * d)[:, None] * x), axis=1)
    ok = err <= MATCH_RTOL * (1.0 + np.max(np.abs(s_sum), axis=1))
    return ok & np.isfinite(err)


# ----------------------------------------------------------------------
# single-block API
# ----------------------------------------------------------------------


def split_block_by_sign(eta, tau: float = SIGN_TAU) -> list[np.ndarray]:
    """Row positions of the block's pieces: one piece unless the linear
    predictors straddle zero (min < -tau and max > tau), in which case the
    non-negative rows come first and the negative rows second."""
    eta = np.asarray(eta, dtype=float)
    if eta.size and eta.min() < -tau and eta.max() > tau:
        return [np.flatnonzero(eta >= 0), np.flatnonzero(eta < 0)]
    return [np.arange(eta.size)]


def smr_response(y, eta, family: GlmFamily) -> tuple[float, bool]:
    """Weighted average of the responses with weights nu(eta_i) eta_i;
    the plain mean (and ``True``) when those weights sum to about zero."""
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if y.size == 0:
        raise ValueError("empty block")
    nue = family.nu(eta) * eta
    yt, deg = _ytilde_batch(
        np.array([nue.sum()]), np.array([(nue * y).sum()]), np.array([np.abs(nue).sum()]), np.array([y.mean()])
    )
    return float(yt[0]), bool(deg[0])


def eta_target(y, eta, family: GlmFamily) -> float:
    """Block mean of nu(eta_i) (y_i - G(eta_i)) eta_i."""
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return float(np.mean(family.nu(eta) * (y - family.inverse_link(eta)) * eta))


def solve_eta(y, eta, ytilde: float, family: GlmFamily, method: str = "auto") -> tuple[float, bool]:
    """Representative linear predictor in [min eta, max eta] matching the
    block's eta-weighted score; the root closest to the block mean of eta.

    Returns ``(eta_tilde, failed)``; when no root is found, ``eta_tilde`` is
    the block mean of eta and ``failed`` is True.
    """
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    target = eta_target(y, eta, family)
    s_rows = _s_fn(family, ytilde, eta)
    glo, ghi = eta[np.argmin(s_rows)], eta[np.argmax(s_rows)]
    out, failed = _solve_eta_batch(
        family,
        np.array([float(ytilde)]),
        np.array([target]),
        np.array([eta.min()]),
        np.array([eta.max()]),
        np.array([eta.mean()]),
        np.array([min(glo, ghi)]),
        np.array([max(glo, ghi)]),
        method=method,
    )
    return float(out[0]), bool(failed[0])


def smr_predictor(X, y, eta, ytilde: float, eta_tilde: float, family: GlmFamily) -> tuple[np.ndarray, bool]:
    """Predictor representative carrying the block's score at the current
    iterate; the block mean of X (and ``True``) when the denominator
    nu(eta~)(y~ - G(eta~)) is about zero."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    r = family.nu(eta) * (y - family.inverse_link(eta))
    x, small = _predictor_batch(
        family,
        np.array([float(ytilde)]),
        np.array([float(eta_tilde)]),
        (X * r[:, None]).sum(axis=0)[None, :],
        np.array([float(X.shape[0])]),
        X.mean(axis=0)[None, :],
        np.array([np.abs(r).mean()]),
    )
    return x[0], bool(small[0])


# ----------------------------------------------------------------------
# one SMR construction pass over a partition
# ----------------------------------------------------------------------


def _piece_points(family, Xs, ys, eta, resid, piece, m, beta, eta_method):
    """SMR construction for rows labelled 0..m-1 by ``piece`` (every label used).

    Returns per-piece arrays ``n, ytil, y_fb, eta_t, x_t, x_fb, failed``.
    """
    order = np.argsort(piece, kind="stable")
    sizes = np.bincount(piece, minlength=m)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    X, y, e, r = Xs[order], ys[order], eta[order], resid[order]
    pid = piece[order]

    def total(v):
        return np.add.reduceat(v, starts, axis=0)

    n = sizes.astype(float)
    nu = family.nu(e)
    nue = nu * e
    ybar = total(y) / n
    xbar = total(X) / n[:, None]
    eta_bar = total(e) / n
    lo = np.minimum.reduceat(e, starts)
    hi = np.maximum.reduceat(e, starts)
    target = total(r * e) / n
    s_sum = total(X * r[:, None])
    scale_d = total(np.abs(r)) / n

    ytil, y_fb = _ytilde_batch(total(nue), total(nue * y), total(np.abs(nue)), ybar)

    # rows where S(eta_i) is smallest / largest give a guaranteed bracket
    s_rows = _s_fn(family, ytil[pid], e)
    s_lo = np.minimum.reduceat(s_rows, starts)
    s_hi = np.maximum.reduceat(s_rows, starts)
    e_at_lo = np.minimum.reduceat(np.where(s_rows == s_lo[pid], e, np.inf), starts)
    e_at_hi = np.minimum.reduceat(np.where(s_rows == s_hi[pid], e, np.inf), starts)
    guard_lo = np.minimum(e_at_lo, e_at_hi)
    guard_hi = np.maximum(e_at_lo, e_at_hi)

    eta_t, failed = _solve_eta_batch(
        family, ytil, target, lo, hi, eta_bar, guard_lo, guard_hi, method=eta_method
    )
    x_t, x_fb = _predictor_batch(family, ytil, eta_t, s_sum, n, xbar, scale_d)
    x_fb |= failed
    # a denominator that is tiny relative to the working precision of eta~
    # magnifies rounding into a far-away point that no longer carries the
    # piece's score; treat it as zero as well
    x_fb |= ~_matches_score(family, ytil, x_t, beta, s_sum, n)
    x_t = np.where(x_fb[:, None], xbar, x_t)

    # single-row pieces are their own representative
    single = np.flatnonzero(sizes == 1)
    if single.size:
        first = starts[single]
        x_t[single] = X[first]
        ytil[single] = y[first]
        eta_t[single] = e[first]
        y_fb[single] = False
        x_fb[single] = False
        failed[single] = False
    return n, ytil, y_fb, eta_t, x_t, x_fb, failed


def smr_representatives(
    data: Dataset,
    part: PartitionSpec,
    family: GlmFamily,
    beta,
    iteration: int = 1,
    eta_method: str = "auto",
    split_depth: int = SPLIT_DEPTH,
) -> RepresentativeSet:
    """Score-matching representatives of every (sign-split) block at ``beta``.

    A piece whose point cannot carry its score (no root, or a vanishing
    denominator) is halved by the order of its linear predictors and each
    half gets its own point, up to ``split_depth`` times; only a piece still
    failing after that falls back to its mean predictor.
    """
    _check(data, part)
    beta = np.asarray(beta, dtype=float)
    X = data.X
    eta = family.check(linear_predictor(X, beta))
    resid = family.nu(eta) * (data.y - family.inverse_link(eta))

    K = part.k
    labels = part.labels
    bmin = np.full(K, np.inf)
    bmax = np.full(K, -np.inf)
    np.minimum.at(bmin, labels, eta)
    np.maximum.at(bmax, labels, eta)
    mixed = (bmin < -SIGN_TAU) & (bmax > SIGN_TAU)
    neg = mixed[labels] & (eta < 0)

    # pieces: (k, 0) for every block, (k, 1) for the negative rows of mixed blocks
    lookup = np.full((K, 2), -1, dtype=np.int64)
    lookup[:, 0] = np.arange(K)
    lookup[mixed, 1] = K + np.arange(int(mixed.sum()))
    piece = lookup[labels, neg.astype(np.int64)]
    m = K + int(mixed.sum())
    p_block = np.concatenate([np.arange(K), np.flatnonzero(mixed)])
    p_part = np.concatenate([np.zeros(K, dtype=np.int64), np.ones(m - K, dtype=np.int64)])
    p_pos = np.zeros(m)  # order of halves within a (block, part) piece

    out = list(_piece_points(family, X, data.y, eta, resid, piece, m, beta, eta_method))
    splits = 0
    for depth in range(split_depth):
        n_, x_fb = out[0], out[5]
        bad = np.flatnonzero(x_fb & (n_ >= 2))
        if bad.size == 0:
            break
        is_bad = np.zeros(m, dtype=bool)
        is_bad[bad] = True
        rows = np.flatnonzero(is_bad[piece])
        # rank rows within their piece by eta (ties by row index)
        o = rows[np.lexsort((rows, eta[rows], piece[rows]))]
        op = piece[o]
        start = np.flatnonzero(np.r_[True, op[1:] != op[:-1]])
        rank = np.arange(o.size) - np.repeat(start, np.diff(np.r_[start, o.size]))
        upper = rank >= (n_[op] // 2)
        new_id = np.full(m, -1, dtype=np.int64)
        new_id[bad] = m + np.arange(bad.size)
        piece[o[upper]] = new_id[op[upper]]
        p_block = np.concatenate([p_block, p_block[bad]])
        p_part = np.concatenate([p_part, p_part[bad]])
        p_pos = np.concatenate([p_pos, p_pos[bad] + 0.5 ** (depth + 1)])
        m_new = m + bad.size
        # rebuild only the pieces that changed
        touched = np.concatenate([bad, new_id[bad]])
        local = np.full(m_new, -1, dtype=np.int64)
        local[touched] = np.arange(touched.size)
        sel = np.flatnonzero(local[piece] >= 0)
        sub = _piece_points(
            family, X[sel], data.y[sel], eta[sel], resid[sel], local[piece[sel]],
            touched.size, beta, eta_method,
        )
        grown = []
        for full, part_vals in zip(out, sub):
            pad = np.zeros((bad.size,) + full.shape[1:], dtype=full.dtype)
            g = np.concatenate([full, pad])
            g[touched] = part_vals
            grown.append(g)
        out = grown
        m = m_new
        splits += bad.size

    n, ytil, y_fb, eta_t, x_t, x_fb, failed = out
    # emit in (block, sign part, half order) order
    order = np.lexsort((p_pos, p_part, p_block))
    rank_of = np.empty(m, dtype=np.int64)
    rank_of[order] = np.arange(m)
    fallback = np.where(x_fb, X_MEAN, np.where(y_fb, Y_MEAN, NO_FALLBACK)).astype(np.int64)
    return RepresentativeSet(
        weights=n[order],
        X=x_t[order],
        y=ytil[order],
        source_block=p_block[order],
        method="smr",
        part=p_part[order],
        fallback=fallback[order],
        eta_tilde=eta_t[order],
        iteration=iteration,
        beta=beta.copy(),
        row_point=rank_of[piece],
        columns=data.columns,
        info={
            "split_blocks": int(mixed.sum()),
            "degenerate_splits": splits,
            "root_failures": int(failed.sum()),
        },
    )


# ----------------------------------------------------------------------
# the iterative fit
# ----------------------------------------------------------------------


def _refit(reps: RepresentativeSet, family, init, tol, max_iter) -> FitResult:
    try:
        return fisher_scoring_fit(reps.weighted_data(), family, init=init, tol=tol, max_iter=max_iter)
    except RankError as exc:
        raise RankError(
            f"{exc} (representative set: {len(reps)} points from "
            f"{np.unique(reps.source_block).size} blocks, {reps.fallback_count} fallbacks, "
            f"method {reps.method}, iteration {reps.iteration})",
            column=exc.column,
            name=exc.name,
        ) from exc


def representative_fit(
    data: Dataset, part: PartitionSpec, family: GlmFamily, method: str = "mean",
    tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
) -> tuple[FitResult, RepresentativeSet]:
    """Fit on a single set of center representatives (``mean``, ``median`` or ``mid``)."""
    builders = {"mean": mean_representatives, "mr": mean_representatives,
                "median": median_representatives, "mid": midpoint_representatives}
    if method not in builders:
        raise ConfigError(f"unknown representative method {method!r}")
    reps = builders[method](data, part)
    res = _refit(reps, family, None, tol, max_iter)
    res.extra.update({"points": len(reps), "fallbacks": 0, "method": reps.method})
    return res, reps


def smr_fit(
    data: Dataset,
    part: PartitionSpec,
    family: GlmFamily,
    T: int = DEFAULT_T,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    init_beta=None,
    eta_method: str = "auto",
) -> tuple[FitResult, list[RepresentativeSet]]:
    """Iterated score-matching representative fit.

    Without ``init_beta`` the start is the fit on mean representatives
    (iteration 0); each of the ``T`` iterations rebuilds the representatives
    at the current iterate and refits warm-started there.  Returns the last
    fit and the representative set of every iteration.
    """
    if T < 0:
        raise ConfigError("T must be >= 0")
    history: list[RepresentativeSet] = []
    if init_beta is None:
        reps = mean_representatives(data, part)
        res = _refit(reps, family, None, tol, max_iter)
        history.append(reps)
    else:
        beta0 = np.array(init_beta, dtype=float)
        res = FitResult(beta0, 0, True, float("nan"), np.full((data.p, data.p), np.nan))
    beta = res.beta
    for t in range(1, T + 1):
        reps = smr_representatives(data, part, family, beta, iteration=t, eta_method=eta_method)
        res = _refit(reps, family, beta, tol, max_iter)
        history.append(reps)
        beta = res.beta
    last = history[-1] if history else None
    res.extra.update(
        {
            "method": "smr",
            "T": T,
            "points": len(last) if last is not None else 0,
            "fallbacks": last.fallback_count if last is not None else 0,
        }
    )
    return res, history


# ----------------------------------------------------------------------
# export: block,weight,ytilde,x1..xp,fallback
# ----------------------------------------------------------------------


def write_representatives(reps: RepresentativeSet, path) -> None:
    with text_sink(path) as fh:
        w = csv.writer(fh)
        w.writerow(["block", "weight", "ytilde", *[f"x{j + 1}" for j in range(reps.p)], "fallback"])
        for i in range(len(reps)):
            w.writerow(
                [int(reps.source_block[i]), repr(float(reps.weights[i])), repr(float(reps.y[i])),
                 *[repr(float(v)) for v in reps.X[i]], FALLBACK_NAMES[reps.fallback[i]]]
            )


def read_representatives(path) -> RepresentativeSet:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        p = len(header) - 4
        if p < 1 or header[:3] != ["block", "weight", "ytilde"] or header[-1] != "fallback":
            raise ValueError("representative file must have header block,weight,ytilde,x1..xp,fallback")
        rows = [r for r in reader if r]
    blocks = np.array([int(r[0]) for r in rows], dtype=np.int64)
    return RepresentativeSet(
        weights=np.array([float(r[1]) for r in rows]),
        X=np.array([[float(v) for v in r[3 : 3 + p]] for r in rows]).reshape(len(rows), p),
        y=np.array([float(r[2]) for r in rows]),
        source_block=blocks,
        method="file",
        fallback=np.array([FALLBACK_NAMES.index(r[-1]) for r in rows], dtype=np.int64),
    )
