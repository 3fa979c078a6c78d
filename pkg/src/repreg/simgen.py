"""Synthetic data: the seven covariate designs, four response models and an
airline-schema generator with per-month natural-partition keys.

All randomness comes from a Philox counter-based generator seeded through
``SeedSequence``; the same configuration always gives the same arrays.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from scipy.special import expit

from ._io import text_sink
from .errors import ConfigError, DataFormatError, GenerationError
from .glm import Dataset

DISTRIBUTIONS = ("mzNormal", "nzNormal", "ueNormal", "mixNormal", "T3", "EXP", "BETA")
MODELS = ("linear", "logit", "cloglog", "poisson", "logit-interactions")
INTERCEPT = "(Intercept)"
KEY_PREFIX = "key:"
POISSON_ETA_MAX = 30.0

# oracle coefficients for the airline-schema generator:
# intercept, QUARTER2-4, DayOfWeek2-7, DepTimeBlk2-4, DISTANCE
AIRLINE_BETA = np.array(
    [-2.3168, -0.0074, 0.0024, -0.0952, -0.1200, -0.1079, 0.0632, 0.0369,
     -0.2321, -0.1041, 0.4678, 1.0978, 1.3058, 5.87e-5]
)
AIRLINE_BETA_PRIME = AIRLINE_BETA.copy()
AIRLINE_BETA_PRIME[-1] = 5.87e-4
AIRLINE_COLUMNS = (
    INTERCEPT,
    "QUARTER2", "QUARTER3", "QUARTER4",
    "DayOfWeek2", "DayOfWeek3", "DayOfWeek4", "DayOfWeek5", "DayOfWeek6", "DayOfWeek7",
    "DepTimeBlk2", "DepTimeBlk3", "DepTimeBlk4",
    "DISTANCE",
)
DISTANCE_RANGE = (8.0, 4983.0)


def make_rng(seed: int) -> Generator:
    return Generator(Philox(SeedSequence(int(seed))))


def default_beta(d: int = 7) -> np.ndarray:
    """beta_0 = 0, remaining coefficients 0.5."""
    b = np.full(d + 1, 0.5)
    b[0] = 0.0
    return b


@dataclass
class SimConfig:
    dist: str = "mzNormal"
    n: int = 100_000
    d: int = 7
    beta: np.ndarray | None = None
    sigma: float = 1.0
    model: str = "logit"
    seed: int = 0

    def __post_init__(self):
        if self.dist not in DISTRIBUTIONS:
            raise ConfigError(f"unknown distribution {self.dist!r}; choose from {', '.join(DISTRIBUTIONS)}")
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.model == "logit-interactions" and self.d != 3:
            raise ConfigError("logit-interactions uses d = 3 covariates")
        if self.beta is None:
            self.beta = default_beta(self.p - 1)
        self.beta = np.asarray(self.beta, dtype=float)
        if self.beta.shape != (self.p,):
            raise ConfigError(f"beta must have {self.p} entries, got {self.beta.shape[0]}")

    @property
    def p(self) -> int:
        return 8 if self.model == "logit-interactions" else self.d + 1


def _equicorrelated(d: int, diag) -> np.ndarray:
    S = np.full((d, d), 0.5)
    np.fill_diagonal(S, diag)
    return S


def gen_covariates(cfg: SimConfig, rng: Generator | None = None) -> np.ndarray:
    """N x d covariate matrix for ``cfg.dist``."""
    rng = make_rng(cfg.seed) if rng is None else rng
    n, d = cfg.n, cfg.d
    if cfg.dist in ("EXP", "BETA"):
        if cfg.dist == "EXP":
            return rng.exponential(scale=0.5, size=(n, d))
        return rng.beta(0.5, 0.5, size=(n, d))
    if cfg.dist == "ueNormal":
        S = _equicorrelated(d, np.arange(1, d + 1, dtype=float) ** 2)
    else:
        S = _equicorrelated(d, 1.0)
    L = np.linalg.cholesky(S)
    Z = rng.standard_normal((n, d)) @ L.T
    if cfg.dist == "nzNormal":
        return Z + 1.5
    if cfg.dist == "mixNormal":
        sign = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        return Z + sign[:, None]
    if cfg.dist == "T3":
        chi = rng.chisquare(3, size=n)
        return Z / np.sqrt(chi / 3.0)[:, None] / 10.0
    return Z


def interaction_expand(x) -> np.ndarray:
    """(x1, x2, x3) -> (1, x1, x2, x3, x1x2, x1x3, x2x3, x1x2x3); works row-wise on N x 3."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != 3:
        raise ConfigError("interaction_expand needs exactly 3 covariates")
    a, b, c = x[:, 0], x[:, 1], x[:, 2]
    out = np.column_stack([np.ones(x.shape[0]), a, b, c, a * b, a * c, b * c, a * b * c])
    return out[0] if single else out


def design_matrix(Z: np.ndarray, cfg: SimConfig) -> np.ndarray:
    if cfg.model == "logit-interactions":
        return interaction_expand(Z)
    return np.column_stack([np.ones(Z.shape[0]), Z])


def design_columns(cfg: SimConfig) -> tuple[str, ...]:
    if cfg.model == "logit-interactions":
        return (INTERCEPT, "x1", "x2", "x3", "x1:x2", "x1:x3", "x2:x3", "x1:x2:x3")
    return (INTERCEPT, *[f"x{j + 1}" for j in range(cfg.d)])


def gen_response(X: np.ndarray, cfg: SimConfig, rng: Generator | None = None) -> np.ndarray:
    """Responses for design ``X`` (intercept column included) under ``cfg.model``."""
    rng = make_rng(cfg.seed + 1) if rng is None else rng
    eta = X @ cfg.beta
    if cfg.model == "linear":
        return eta + cfg.sigma * rng.standard_normal(X.shape[0])
    if cfg.model in ("logit", "logit-interactions"):
        mu = expit(eta)
    elif cfg.model == "cloglog":
        mu = -np.expm1(-np.exp(eta))
    else:
        if eta.max() > POISSON_ETA_MAX:
            raise GenerationError(
                f"poisson mean exp({eta.max():.1f}) overflows; use smaller coefficients"
            )
        return rng.poisson(np.exp(eta)).astype(float)
    return (rng.random(X.shape[0]) < mu).astype(float)


def simulate(cfg: SimConfig) -> Dataset:
    """Covariates and responses for one replication, from one generator stream."""
    rng = make_rng(cfg.seed)
    Z = gen_covariates(cfg, rng)
    X = design_matrix(Z, cfg)
    y = gen_response(X, cfg, rng)
    return Dataset(X, y, design_columns(cfg))


# ----------------------------------------------------------------------
# airline-schema generator
# ----------------------------------------------------------------------


def _one_hot(levels: np.ndarray, k: int) -> np.ndarray:
    """Dummy columns for levels 2..k (level 1 is the reference)."""
    return (levels[:, None] == np.arange(2, k + 1)[None, :]).astype(float)


def gen_airline_like(months: int = 12, rows_per_month: int = 10_000, beta=None, seed: int = 0,
                     distance_bins: int = 8) -> Dataset:
    """Binary late-arrival data with the airline design.

    Each month is one "file": QUARTER is fixed by the month, DayOfWeek
    (1-7) and DepTimeBlk (1-4) are uniform, DISTANCE is uniform on
    [8, 4983] and is discretized within the month into ``distance_bins``
    equal-depth blocks.  Keys ``month``, ``DayOfWeek``, ``DepTimeBlk`` and
    ``DistanceBlk`` are attached for natural partitioning.
    """
    from .partition import discretize_column

    beta = AIRLINE_BETA if beta is None else np.asarray(beta, dtype=float)
    if beta.shape != (len(AIRLINE_COLUMNS),):
        raise ConfigError(f"airline beta must have {len(AIRLINE_COLUMNS)} entries")
    if months < 1 or rows_per_month < 1:
        raise ConfigError("months and rows_per_month must be >= 1")
    rng = make_rng(seed)
    n = months * rows_per_month
    month = np.repeat(np.arange(1, months + 1), rows_per_month)
    quarter = ((month - 1) % 12) // 3 + 1
    dow = rng.integers(1, 8, size=n)
    blk = rng.integers(1, 5, size=n)
    dist = rng.uniform(*DISTANCE_RANGE, size=n)
    dist_blk = np.empty(n, dtype=np.int64)
    for m in range(months):
        sl = slice(m * rows_per_month, (m + 1) * rows_per_month)
        dist_blk[sl] = discretize_column(dist[sl], distance_bins)[0] + 1
    X = np.column_stack([np.ones(n), _one_hot(quarter, 4), _one_hot(dow, 7), _one_hot(blk, 4), dist])
    y = (rng.random(n) < expit(X @ beta)).astype(float)
    keys = {"month": month, "DayOfWeek": dow, "DepTimeBlk": blk, "DistanceBlk": dist_blk}
    return Dataset(X, y, AIRLINE_COLUMNS, keys)


# ----------------------------------------------------------------------
# CSV: y,x1..xd[,key:name...]; the intercept is implicit
# ----------------------------------------------------------------------


def write_csv(data: Dataset, path) -> None:
    """Write ``y``, the non-intercept predictors, then key columns (``key:`` prefix)."""
    cols = [j for j, c in enumerate(data.columns) if c != INTERCEPT]
    keys = list(data.keys)
    with text_sink(path) as fh:
        w = csv.writer(fh)
        w.writerow(["y", *[data.columns[j] for j in cols], *[KEY_PREFIX + k for k in keys]])
        for i in range(data.n):
            w.writerow(
                [repr(float(data.y[i])), *[repr(float(data.X[i, j])) for j in cols],
                 *[str(data.keys[k][i]) for k in keys]]
            )


def read_csv(path, intercept: bool = True) -> Dataset:
    """Read the CSV format written by :func:`write_csv`.

    Malformed input raises :class:`DataFormatError` carrying the 1-based line
    number.  Key columns hold integer codes.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty file (a header line is required)", line=1) from None
        header = [h.strip() for h in header]
        if not header or header[0] != "y":
            raise DataFormatError("header must start with 'y'", line=1)
        pred = [h for h in header[1:] if not h.startswith(KEY_PREFIX)]
        keyn = [h[len(KEY_PREFIX):] for h in header[1:] if h.startswith(KEY_PREFIX)]
        npred = len(pred)
        if header[1 : 1 + npred] != pred:
            raise DataFormatError("key columns must follow all predictor columns", line=1)
        if npred == 0 and not intercept:
            raise DataFormatError("no predictor columns", line=1)
        vals, keyvals = [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(f"expected {len(header)} fields, found {len(row)}", line=line)
            try:
                v = [float(c) for c in row[: 1 + npred]]
                kv = [int(c) for c in row[1 + npred :]]
            except ValueError as exc:
                raise DataFormatError(f"unparseable value ({exc})", line=line) from None
            if not all(np.isfinite(v)):
                raise DataFormatError("non-finite value", line=line)
            vals.append(v)
            keyvals.append(kv)
    if not vals:
        raise DataFormatError("no data rows", line=2)
    arr = np.array(vals)
    karr = np.array(keyvals, dtype=np.int64).reshape(len(vals), len(keyn))
    X = arr[:, 1:]
    cols = tuple(pred)
    if intercept:
        X = np.column_stack([np.ones(arr.shape[0]), X])
        cols = (INTERCEPT, *cols)
    return Dataset(X, arr[:, 0], cols, {k: karr[:, i] for i, k in enumerate(keyn)})
