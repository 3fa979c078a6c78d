"""Data partitions: equal-depth grids, k-means clusters, natural (keyed)
partitions, and block-geometry diagnostics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

from ._io import text_sink
from .errors import ConfigError, DataFormatError
from .glm import Dataset

METHODS = ("equal-depth", "kmeans", "natural", "by-distinct-x")
DEFAULT_CELL_CAP = 10**6
EXACT_DIAMETER_MAX = 2000
KMEANS_MAX_ITER = 20


@dataclass(frozen=True)
class PartitionSpec:
    """Disjoint, exhaustive, nonempty blocks over the rows of a dataset.

    ``labels[i]`` is the block id (0..K-1) of row ``i``.  Equal-depth
    partitions also carry the grid: ``grid_columns`` (predictor column
    indices), ``edges`` (per grid column: observed min, interior cut points,
    observed max) and ``cells`` (K x len(grid_columns) cell indices).
    k-means partitions carry ``centers`` in the clustered columns.
    """

    labels: np.ndarray
    method: str
    grid_columns: tuple[int, ...] = ()
    edges: tuple[np.ndarray, ...] = ()
    cells: np.ndarray | None = None
    centers: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown partition method {self.method!r}")
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("labels must be a non-empty 1-d array")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValueError("labels must be integers")
        labels = labels.astype(np.int64)
        K = int(labels.max()) + 1
        counts = np.bincount(labels, minlength=K)
        if labels.min() < 0 or (counts == 0).any():
            raise ValueError("block ids must be 0..K-1 with every block nonempty")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def k(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    @property
    def blocks(self) -> list[np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        return np.split(order, np.cumsum(self.sizes)[:-1])

    @property
    def cut_points(self) -> tuple[np.ndarray, ...]:
        return tuple(e[1:-1] for e in self.edges)


def from_labels(raw, method: str = "natural", **kw) -> PartitionSpec:
    """Build a partition from arbitrary hashable-ish labels, numbering blocks
    in sorted label order and dropping empty ones."""
    raw = np.asarray(raw)
    _, inv = np.unique(raw, return_inverse=True, axis=0 if raw.ndim > 1 else None)
    return PartitionSpec(inv.reshape(-1).astype(np.int64), method, **kw)


def _default_columns(data: Dataset) -> list[int]:
    X = data.X
    return [j for j in range(data.p) if X[:, j].min() != X[:, j].max()]


def _resolve_columns(data: Dataset, columns) -> list[int]:
    if columns is None:
        return _default_columns(data)
    out = []
    for c in columns:
        if isinstance(c, str):
            if c not in data.columns:
                raise ConfigError(f"no predictor column named {c!r}")
            out.append(data.columns.index(c))
        else:
            c = int(c)
            if not 0 <= c < data.p:
                raise ConfigError(f"column index {c} out of range for p={data.p}")
            out.append(c)
    return out


# ----------------------------------------------------------------------
# quantile grids
# ----------------------------------------------------------------------


def _nearest_rank_cuts(values: np.ndarray, bins: int) -> np.ndarray:
    s = np.sort(values)
    n = s.shape[0]
    ranks = [math.ceil(j * n / bins) - 1 for j in range(1, bins)]
    return s[np.asarray(ranks, dtype=np.int64)] if ranks else np.empty(0)


def discretize_column(values, bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Equal-depth labels 0..bins-1 and the cut list for one column.

    Cut j is the nearest-rank (type 1) quantile j/bins; a value equal to a cut
    goes to the lower cell.
    """
    if bins < 1:
        raise ConfigError("bins must be >= 1")
    values = np.asarray(values, dtype=float).reshape(-1)
    cuts = _nearest_rank_cuts(values, bins)
    labels = np.searchsorted(cuts, values, side="left")
    return labels.astype(np.int64), cuts


def equal_depth_partition(
    data: Dataset, m: int, columns=None, cap: int = DEFAULT_CELL_CAP
) -> PartitionSpec:
    if m < 1:
        raise ConfigError("m must be >= 1")
    cols = _resolve_columns(data, columns)
    if m ** len(cols) > cap:
        raise ConfigError(
            f"equal-depth grid with m={m} on {len(cols)} columns has {m}^{len(cols)} cells, "
            f"above the cap of {cap}; use a kmeans partition instead"
        )
    cell_idx = np.zeros((data.n, len(cols)), dtype=np.int64)
    edges = []
    for a, j in enumerate(cols):
        x = data.X[:, j]
        lab, cuts = discretize_column(x, m)
        cell_idx[:, a] = lab
        edges.append(np.concatenate([[x.min()], cuts, [x.max()]]))
    code = np.zeros(data.n, dtype=np.int64)
    for a in range(len(cols)):
        code = code * m + cell_idx[:, a]
    uniq, first, inv = np.unique(code, return_index=True, return_inverse=True)
    cells = cell_idx[first]
    return PartitionSpec(
        inv.astype(np.int64),
        "equal-depth",
        grid_columns=tuple(cols),
        edges=tuple(edges),
        cells=cells,
        info={"m": m, "max_cells": m ** len(cols)},
    )


# ----------------------------------------------------------------------
# k-means
# ----------------------------------------------------------------------


def _rng(seed: int) -> Generator:
    return Generator(Philox(SeedSequence(seed)))


def _chunk_rows(k: int) -> int:
    return max(256, 4_000_000 // max(k, 1))


def _assign(Z: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest center per row and the squared distance to it."""
    labels, _, _ = _assign_two(Z, C)
    diff = Z - C[labels]
    return labels, np.einsum("ij,ij->i", diff, diff)


def _assign_two(Z: np.ndarray, C: np.ndarray):
    """Nearest center, distance to it and distance to the second nearest."""
    n = Z.shape[0]
    cn = np.einsum("ij,ij->i", C, C)
    zn = np.einsum("ij,ij->i", Z, Z)
    labels = np.empty(n, dtype=np.int64)
    second = np.empty(n)
    step = _chunk_rows(C.shape[0])
    for s in range(0, n, step):
        d = Z[s : s + step] @ C.T
        d *= -2.0
        d += cn[None, :]
        lab = np.argmin(d, axis=1)
        labels[s : s + step] = lab
        if C.shape[0] > 1:
            rows = np.arange(d.shape[0])
            d[rows, lab] = np.inf
            second[s : s + step] = d.min(axis=1) + zn[s : s + step]
        else:
            second[s : s + step] = np.inf
    diff = Z - C[labels]
    first = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return labels, first, np.sqrt(np.maximum(second, 0.0))


def _kmeanspp(Z: np.ndarray, K: int, rng: Generator) -> np.ndarray:
    n = Z.shape[0]
    idx = [int(rng.integers(n))]
    d2 = np.einsum("ij,ij->i", Z - Z[idx[0]], Z - Z[idx[0]])
    for _ in range(1, K):
        total = d2.sum()
        if total <= 0:
            # fewer distinct points than K; take unused rows in order
            used = set(idx)
            nxt = next(i for i in range(n) if i not in used)
        else:
            r = rng.random() * total
            nxt = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            nxt = min(nxt, n - 1)
        idx.append(nxt)
        diff = Z - Z[nxt]
        np.minimum(d2, np.einsum("ij,ij->i", diff, diff), out=d2)
    return Z[np.asarray(idx)].copy()


_BOUND_SLACK = 1e-9


def kmeans_partition(
    data: Dataset, K: int, seed: int = 0, max_iter: int = KMEANS_MAX_ITER, columns=None
) -> PartitionSpec:
    """Lloyd's algorithm from k-means++ seeding on the non-constant predictor columns.

    Assignment steps skip rows whose nearest center provably did not change
    (an upper bound on the distance to the own center against a lower bound
    on the distance to every other center), so the labels are those of plain
    Lloyd iterations.  Empty clusters are reseeded at the point farthest
    from its center.  The within-cluster sum of squares after each assignment
    step is recorded in ``info['objective']``.
    """
    if K < 1:
        raise ConfigError("K must be >= 1")
    if K > data.n:
        raise ConfigError(f"K={K} exceeds the number of rows N={data.n}")
    cols = _resolve_columns(data, columns)
    Z = data.X[:, cols] if cols else np.zeros((data.n, 1))
    Z = np.ascontiguousarray(Z, dtype=float)
    rng = _rng(seed)
    C = _kmeanspp(Z, K, rng)
    objective = []
    labels, upper, lower = _assign_two(Z, C)
    it = 0
    for it in range(1, max_iter + 1):
        diff = Z - C[labels]
        objective.append(float(np.einsum("ij,ij->i", diff, diff).sum()))
        # update step
        counts = np.bincount(labels, minlength=K)
        sums = np.zeros_like(C)
        _group_sum(sums, labels, Z)
        nonempty = counts > 0
        C_new = C.copy()
        C_new[nonempty] = sums[nonempty] / counts[nonempty, None]
        reseeded = False
        if not nonempty.all():
            diff = Z - C_new[labels]
            far = np.einsum("ij,ij->i", diff, diff)
            for k in np.flatnonzero(~nonempty):
                i = int(np.argmax(far))
                C_new[k] = Z[i]
                far[i] = -1.0
            reseeded = True
        move = np.sqrt(((C_new - C) ** 2).sum(axis=1))
        C = C_new
        if it == max_iter:
            break
        # assignment step with bounds
        if reseeded or K == 1:
            new_labels, upper, lower = _assign_two(Z, C)
        else:
            upper = upper + move[labels]
            lower = lower - move.max()
            cc = np.sqrt(np.maximum(_pairwise_sq(C), 0.0))
            np.fill_diagonal(cc, np.inf)
            half = 0.5 * cc.min(axis=1)
            bound = np.maximum(half[labels], lower)
            check = np.flatnonzero(upper >= bound * (1.0 - _BOUND_SLACK))
            new_labels = labels.copy()
            if check.size:
                d = Z[check] - C[labels[check]]
                upper[check] = np.sqrt(np.einsum("ij,ij->i", d, d))
                redo = check[upper[check] >= bound[check] * (1.0 - _BOUND_SLACK)]
                if redo.size:
                    lab, up, lo = _assign_two(Z[redo], C)
                    new_labels[redo] = lab
                    upper[redo] = up
                    lower[redo] = lo
        if np.array_equal(new_labels, labels):
            labels = new_labels
            diff = Z - C[labels]
            objective.append(float(np.einsum("ij,ij->i", diff, diff).sum()))
            break
        labels = new_labels
    # renumbering drops clusters that ended up empty; keep centers aligned
    kept, compact = np.unique(labels, return_inverse=True)
    return PartitionSpec(
        compact.astype(np.int64),
        "kmeans",
        centers=C[kept],
        info={"objective": objective, "iterations": it, "columns": tuple(cols), "seed": seed},
    )


def _pairwise_sq(C: np.ndarray) -> np.ndarray:
    cn = np.einsum("ij,ij->i", C, C)
    return cn[:, None] + cn[None, :] - 2.0 * (C @ C.T)


def _group_sum(out: np.ndarray, labels: np.ndarray, Z: np.ndarray) -> None:
    for j in range(Z.shape[1]):
        out[:, j] = np.bincount(labels, weights=Z[:, j], minlength=out.shape[0])


# ----------------------------------------------------------------------
# natural partitions
# ----------------------------------------------------------------------


def natural_partition(data: Dataset, key_columns) -> PartitionSpec:
    """One block per distinct tuple of the key columns (key or predictor names)."""
    if isinstance(key_columns, str):
        key_columns = [key_columns]
    key_columns = list(key_columns)
    if not key_columns:
        raise ConfigError("natural partition needs at least one key column")
    try:
        stacked = [np.asarray(data.column(c)) for c in key_columns]
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    codes = []
    for v in stacked:
        _, inv = np.unique(v, return_inverse=True)
        codes.append(inv.reshape(-1))
    part = from_labels(np.column_stack(codes), "natural")
    return PartitionSpec(part.labels, "natural", info={"keys": tuple(key_columns)})


def by_distinct_x_partition(data: Dataset) -> PartitionSpec:
    return from_labels(data.X, "by-distinct-x")


# ----------------------------------------------------------------------
# geometry
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class BlockGeometry:
    delta: float
    delta_tilde: float | None
    deltas: np.ndarray
    bound_statistic: float
    exact: np.ndarray

    @property
    def all_exact(self) -> bool:
        return bool(self.exact.all())


def _diameter(P: np.ndarray) -> float:
    if P.shape[0] < 2:
        return 0.0
    sq = np.einsum("ij,ij->i", P, P)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (P @ P.T)
    i, j = np.unravel_index(np.argmax(d2), d2.shape)
    return float(np.linalg.norm(P[i] - P[j]))


def block_diameter(P: np.ndarray, exact_max: int = EXACT_DIAMETER_MAX) -> tuple[float, bool]:
    """Max pairwise distance; above ``exact_max`` rows, twice the largest
    distance to the centroid (within a factor 2 of the exact value)."""
    if P.shape[0] <= exact_max:
        return _diameter(P), True
    c = P.mean(axis=0)
    r = np.sqrt(np.max(np.einsum("ij,ij->i", P - c, P - c)))
    return 2.0 * float(r), False


def block_geometry(
    data: Dataset, part: PartitionSpec, reps=None, exact_max: int = EXACT_DIAMETER_MAX
) -> BlockGeometry:
    if part.n != data.n:
        raise ConfigError(f"partition covers {part.n} rows, data has {data.n}")
    deltas = np.empty(part.k)
    exact = np.empty(part.k, dtype=bool)
    for k, rows in enumerate(part.blocks):
        deltas[k], exact[k] = block_diameter(data.X[rows], exact_max)
    delta_tilde = None
    if reps is not None:
        if reps.row_point is None:
            raise ConfigError("representative set has no row membership; cannot compute delta-tilde")
        diff = data.X - reps.X[reps.row_point]
        delta_tilde = float(np.sqrt(np.max(np.einsum("ij,ij->i", diff, diff))))
    return BlockGeometry(
        delta=float(deltas.max()),
        delta_tilde=delta_tilde,
        deltas=deltas,
        bound_statistic=float(np.dot(part.sizes, deltas**2)),
        exact=exact,
    )


# ----------------------------------------------------------------------
# file format: header "row,block", 0-based row index
# ----------------------------------------------------------------------


def write_partition(part: PartitionSpec, path) -> None:
    with text_sink(path) as fh:
        w = csv.writer(fh)
        w.writerow(["row", "block"])
        for i, b in enumerate(part.labels):
            w.writerow([i, int(b)])


def read_partition(path, n: int | None = None) -> PartitionSpec:
    rows, blocks = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["row", "block"]:
            raise DataFormatError("partition file must start with header 'row,block'", line=1)
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 2:
                raise DataFormatError(f"expected 2 fields, got {len(rec)}", line=lineno)
            try:
                rows.append(int(rec[0]))
                blocks.append(int(rec[1]))
            except ValueError:
                raise DataFormatError(f"non-integer field in {rec!r}", line=lineno) from None
    rows = np.asarray(rows, dtype=np.int64)
    blocks = np.asarray(blocks, dtype=np.int64)
    total = rows.size if n is None else n
    if rows.size != total or not np.array_equal(np.sort(rows), np.arange(total)):
        raise DataFormatError(f"partition rows must cover 0..{total - 1} exactly once")
    labels = np.empty(total, dtype=np.int64)
    labels[rows] = blocks
    return from_labels(labels, "natural")


def parse_partition_arg(arg: str, data: Dataset, seed: int = 0) -> PartitionSpec:
    """``equal-depth:m``, ``kmeans:K``, ``natural:col1,col2`` or ``distinct-x``."""
    kind, _, rest = arg.partition(":")
    kind = kind.strip().lower()
    try:
        if kind in ("equal-depth", "equal_depth", "grid"):
            return equal_depth_partition(data, int(rest))
        if kind == "kmeans":
            return kmeans_partition(data, int(rest), seed=seed)
        if kind == "natural":
            return natural_partition(data, [c.strip() for c in rest.split(",") if c.strip()])
        if kind in ("distinct-x", "by-distinct-x"):
            return by_distinct_x_partition(data)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad partition argument {arg!r}: {exc}") from None
    raise ConfigError(f"unknown partition kind {kind!r} in {arg!r}")
