"""GLM families, score / log-likelihood evaluation and the two solvers.

A family bundles the inverse link ``G``, its derivative ``G'``, the variance
function ``h(eta) = Var(Y | eta)`` (dispersion fixed at 1) and the score
weight ``nu(eta) = G'(eta) / h(eta)``, so that the score of a weighted data
set is ``sum_i w_i (y_i - G(eta_i)) nu(eta_i) X_i``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import expit, log_ndtr, logit, ndtr, ndtri

from .errors import DomainError, IllConditionedWarning, RankError

FAMILIES = ("normal", "bernoulli", "poisson", "gamma", "inverse-gaussian")
LINKS = (
    "identity",
    "logit",
    "probit",
    "cloglog",
    "loglog",
    "cauchit",
    "log",
    "reciprocal",
    "inverse-squared",
)

CANONICAL_LINK = {
    "normal": "identity",
    "bernoulli": "logit",
    "poisson": "log",
    "gamma": "reciprocal",
    "inverse-gaussian": "inverse-squared",
}

ALLOWED_LINKS = {
    "normal": ("identity", "log"),
    "bernoulli": ("logit", "probit", "cloglog", "loglog", "cauchit"),
    "poisson": ("log", "identity"),
    "gamma": ("reciprocal", "log", "identity"),
    "inverse-gaussian": ("inverse-squared", "log"),
}

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 25
COND_WARN = 1e12
# Cholesky pivot (squared) relative to the original diagonal below which a
# column is treated as linearly dependent on its predecessors.
_PIVOT_RTOL = 1e-13
_MU_MIN = np.finfo(float).tiny
_MU_MAX = 1.0 - np.finfo(float).epsneg


# ----------------------------------------------------------------------
# data containers
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Predictor matrix ``X`` (N x p), response ``y`` (N,) and column names."""

    X: np.ndarray
    y: np.ndarray
    columns: tuple[str, ...] = ()
    keys: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"X must be a non-empty 2-d array, got shape {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise ValueError("Dataset entries must be finite")
        cols = tuple(self.columns) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(cols) != X.shape[1]:
            raise ValueError(f"{len(cols)} column names for {X.shape[1]} columns")
        keys = {}
        for name, values in dict(self.keys).items():
            values = np.asarray(values)
            if values.shape != (X.shape[0],):
                raise ValueError(f"key column {name!r} has shape {values.shape}, expected ({X.shape[0]},)")
            values.setflags(write=False)
            keys[name] = values
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "keys", keys)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def weighted(self) -> "WeightedData":
        return WeightedData(np.ones(self.n), self.X, self.y, self.columns)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        keys = {k: v[rows] for k, v in self.keys.items()}
        return Dataset(self.X[rows], self.y[rows], self.columns, keys)

    def column(self, name: str) -> np.ndarray:
        """A key column or, failing that, a predictor column by name."""
        if name in self.keys:
            return self.keys[name]
        if name in self.columns:
            return self.X[:, self.columns.index(name)]
        raise KeyError(f"no column named {name!r}")


@dataclass(frozen=True)
class WeightedData:
    """K weighted rows ``(w_k, x_k, y_k)``; weights act as frequency weights."""

    w: np.ndarray
    X: np.ndarray
    y: np.ndarray
    columns: tuple[str, ...] = ()

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if not (w.shape[0] == X.shape[0] == y.shape[0]):
            raise ValueError("w, X and y must have the same number of rows")
        if w.shape[0] == 0:
            raise ValueError("WeightedData needs at least one row")
        if not (w > 0).all():
            raise ValueError("weights must be positive")
        if not (np.isfinite(w).all() and np.isfinite(X).all() and np.isfinite(y).all()):
            raise ValueError("WeightedData entries must be finite")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "columns", tuple(self.columns))

    @property
    def p(self) -> int:
        return self.X.shape[1]


def as_weighted(data) -> WeightedData:
    if isinstance(data, WeightedData):
        return data
    if isinstance(data, Dataset):
        return data.weighted()
    raise TypeError(f"expected Dataset or WeightedData, got {type(data).__name__}")


@dataclass
class FitResult:
    beta: np.ndarray
    iterations: int
    converged: bool
    final_score_norm: float
    fisher_information: np.ndarray
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "beta": [float(b) for b in self.beta],
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "final_score_norm": float(self.final_score_norm),
        }
        out.update(self.extra)
        return out


# ----------------------------------------------------------------------
# families
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class GlmFamily:
    family: str
    link: str = ""

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        link = self.link or CANONICAL_LINK[self.family]
        if link not in ALLOWED_LINKS[self.family]:
            raise ValueError(
                f"link {link!r} not supported for family {self.family!r}; "
                f"choose from {ALLOWED_LINKS[self.family]}"
            )
        object.__setattr__(self, "link", link)

    @property
    def canonical(self) -> bool:
        return CANONICAL_LINK[self.family] == self.link

    @property
    def name(self) -> str:
        return f"{self.family}-{self.link}"

    def __str__(self) -> str:
        return self.name

    # -- link pieces --------------------------------------------------

    def valid(self, eta) -> np.ndarray:
        """Elementwise mask of linear predictors inside the domain."""
        eta = np.asarray(eta, dtype=float)
        ok = np.isfinite(eta)
        if self.link == "reciprocal":
            ok &= eta != 0
        elif self.link == "inverse-squared":
            ok &= eta > 0
        if self.family in ("poisson", "gamma", "inverse-gaussian") and self.link == "identity":
            ok &= eta > 0
        return ok

    def check(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        ok = self.valid(eta)
        if not ok.all():
            bad = eta[~ok].flat[0]
            raise DomainError(f"linear predictor {bad!r} outside the domain of the {self.link} link")
        return eta

    def inverse_link(self, eta) -> np.ndarray:
        mu = self._raw_inverse_link(eta)
        if self.family == "bernoulli":
            # keep the mean strictly inside (0, 1) where it would round onto the boundary
            mu = np.clip(mu, _MU_MIN, _MU_MAX)
        return mu

    def _raw_inverse_link(self, eta) -> np.ndarray:
        link = self.link
        if link == "identity":
            return np.array(eta, dtype=float)
        if link == "logit":
            return expit(eta)
        if link == "probit":
            return ndtr(eta)
        if link == "cloglog":
            return -np.expm1(-np.exp(eta))
        if link == "loglog":
            return np.exp(-np.exp(eta))
        if link == "cauchit":
            return np.arctan2(1.0, -np.asarray(eta, dtype=float)) / np.pi
        if link == "log":
            return np.exp(eta)
        if link == "reciprocal":
            return 1.0 / np.asarray(eta, dtype=float)
        # inverse-squared
        return 1.0 / np.sqrt(eta)

    def d_inverse_link(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        link = self.link
        if link == "identity":
            return np.ones_like(eta)
        if link == "logit":
            g = expit(eta)
            return g * expit(-eta)
        if link == "probit":
            return np.exp(-0.5 * eta * eta - _LOG_SQRT_2PI)
        if link == "cloglog":
            return np.exp(eta - np.exp(eta))
        if link == "loglog":
            return -np.exp(eta - np.exp(eta))
        if link == "cauchit":
            return 1.0 / (np.pi * (1.0 + eta * eta))
        if link == "log":
            return np.exp(eta)
        if link == "reciprocal":
            return -1.0 / (eta * eta)
        return -0.5 * eta**-1.5

    def link_fn(self, mu) -> np.ndarray:
        """g(mu); the inverse of :meth:`inverse_link`."""
        mu = np.asarray(mu, dtype=float)
        link = self.link
        if link == "identity":
            return mu.copy()
        if link == "logit":
            return logit(mu)
        if link == "probit":
            return ndtri(mu)
        if link == "cloglog":
            return np.log(-np.log1p(-mu))
        if link == "loglog":
            return np.log(-np.log(mu))
        if link == "cauchit":
            return np.tan(np.pi * (mu - 0.5))
        if link == "log":
            return np.log(mu)
        if link == "reciprocal":
            return 1.0 / mu
        return mu**-2.0

    def variance(self, eta) -> np.ndarray:
        """h(eta): variance of Y at linear predictor eta (dispersion 1)."""
        mu = self.inverse_link(eta)
        fam = self.family
        if fam == "normal":
            return np.ones_like(mu)
        if fam == "bernoulli":
            return mu * (1.0 - mu)
        if fam == "poisson":
            return mu
        if fam == "gamma":
            return mu * mu
        return mu**3

    def nu(self, eta) -> np.ndarray:
        """Score weight G'(eta)/h(eta), evaluated in a numerically stable form."""
        eta = np.asarray(eta, dtype=float)
        if self.canonical:
            # constant for canonical pairs: 1, 1, 1, -1, -1/2
            c = {"gamma": -1.0, "inverse-gaussian": -0.5}.get(self.family, 1.0)
            return np.full_like(eta, c)
        link = self.link
        if self.family == "bernoulli":
            if link == "probit":
                log_phi = -0.5 * eta * eta - _LOG_SQRT_2PI
                return np.exp(log_phi - log_ndtr(eta) - log_ndtr(-eta))
            if link in ("cloglog", "loglog"):
                u = np.exp(eta)
                with np.errstate(invalid="ignore", divide="ignore"):
                    r = np.where(u > 1e-300, u / -np.expm1(-np.maximum(u, 1e-300)), 1.0)
                return r if link == "cloglog" else -r
            if link == "cauchit":
                a = np.arctan(np.abs(eta))
                tail = np.arctan2(1.0, np.abs(eta))  # pi/2 - |atan(eta)|, no cancellation
                return np.pi / ((1.0 + eta * eta) * tail * (0.5 * np.pi + a))
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.d_inverse_link(eta) / self.variance(eta)

    def log_likelihood_terms(self, y, eta) -> np.ndarray:
        """Per-row log-likelihood up to terms free of eta (dispersion 1)."""
        y = np.asarray(y, dtype=float)
        eta = np.asarray(eta, dtype=float)
        fam = self.family
        if fam == "normal":
            mu = self.inverse_link(eta)
            return -0.5 * (y - mu) ** 2
        if fam == "bernoulli":
            log_g, log_1mg = self._bernoulli_logs(eta)
            a = np.where(y != 0, y * log_g, 0.0)
            b = np.where(y != 1, (1.0 - y) * log_1mg, 0.0)
            return a + b
        if fam == "poisson":
            log_mu = eta if self.link == "log" else np.log(self.inverse_link(eta))
            mu = self.inverse_link(eta)
            return np.where(y != 0, y * log_mu, 0.0) - mu
        mu = self.inverse_link(eta)
        if fam == "gamma":
            return -y / mu - np.log(mu)
        return -((y - mu) ** 2) / (2.0 * y * mu * mu)

    def _bernoulli_logs(self, eta):
        link = self.link
        if link == "logit":
            return -np.logaddexp(0.0, -eta), -np.logaddexp(0.0, eta)
        if link == "probit":
            return log_ndtr(eta), log_ndtr(-eta)
        if link == "cloglog":
            u = np.exp(eta)
            return np.log(-np.expm1(-u)), -u
        if link == "loglog":
            u = np.exp(eta)
            return -u, np.log(-np.expm1(-u))
        # cauchit
        return np.log(np.arctan2(1.0, -eta) / np.pi), np.log(np.arctan2(1.0, eta) / np.pi)

    def initial_eta(self, y) -> np.ndarray:
        """Starting linear predictor from the responses (used when beta=0 is invalid)."""
        y = np.asarray(y, dtype=float)
        fam = self.family
        if fam == "bernoulli":
            mu = (y + 0.5) / 2.0
        elif fam == "normal":
            mu = y.copy()
            if self.link == "log":
                mu = np.maximum(mu, 1e-3 + 0.1 * np.abs(mu).mean())
        else:
            mu = np.maximum(y, 0.1 * max(float(np.mean(y)), 1e-3))
        return self.link_fn(mu)


def family_from_name(name: str) -> GlmFamily:
    """Parse ``'bernoulli-logit'``, ``'logit'``, ``'poisson'`` and similar."""
    name = name.strip().lower()
    aliases = {
        "linear": ("normal", "identity"),
        "gaussian": ("normal", "identity"),
        "logistic": ("bernoulli", "logit"),
        "binomial": ("bernoulli", "logit"),
        "inverse_gaussian": ("inverse-gaussian", ""),
    }
    if name in aliases:
        return GlmFamily(*aliases[name])
    if name in FAMILIES:
        return GlmFamily(name)
    if name in ALLOWED_LINKS["bernoulli"]:
        return GlmFamily("bernoulli", name)
    for fam in sorted(FAMILIES, key=len, reverse=True):
        if name.startswith(fam + "-") or name.startswith(fam + ":"):
            return GlmFamily(fam, name[len(fam) + 1 :])
    raise ValueError(f"cannot parse family {name!r}")


def link_eval(family: GlmFamily, eta: float) -> tuple[float, float, float, float]:
    """Return ``(G, G', nu, h)`` at a single linear predictor value."""
    e = family.check(np.array([float(eta)]))
    var = family.variance(e)
    if not (np.isfinite(var).all() and (var > 0).all()):
        raise DomainError(f"variance is not positive at eta={eta!r} for {family}")
    return (
        float(family.inverse_link(e)[0]),
        float(family.d_inverse_link(e)[0]),
        float(family.nu(e)[0]),
        float(var[0]),
    )


# ----------------------------------------------------------------------
# score and likelihood
# ----------------------------------------------------------------------


def linear_predictor(X, beta) -> np.ndarray:
    """Row-wise ``X @ beta`` accumulated column by column in a fixed order.

    Each row's value depends only on that row, bit for bit, whichever other
    rows are in ``X``; a BLAS product may round differently for different
    row subsets, which matters where a decision thresholds the predictor.
    """
    X = np.asarray(X, dtype=float)
    beta = np.asarray(beta, dtype=float)
    eta = X[:, 0] * beta[0]
    for j in range(1, X.shape[1]):
        eta += X[:, j] * beta[j]
    return eta



def score(data, family: GlmFamily, beta) -> np.ndarray:
    """Weighted score ``sum_i w_i (y_i - G(eta_i)) nu(eta_i) X_i``."""
    wd = as_weighted(data)
    beta = np.asarray(beta, dtype=float)
    eta = family.check(wd.X @ beta)
    r = wd.w * (wd.y - family.inverse_link(eta)) * family.nu(eta)
    return wd.X.T @ r


def log_likelihood(data, family: GlmFamily, beta) -> float:
    wd = as_weighted(data)
    eta = family.check(wd.X @ np.asarray(beta, dtype=float))
    return float(np.dot(wd.w, family.log_likelihood_terms(wd.y, eta)))


def information(data, family: GlmFamily, beta) -> np.ndarray:
    """Expected information ``sum_i w_i G'(eta_i)^2 / h(eta_i) X_i X_i^T``."""
    wd = as_weighted(data)
    eta = family.check(wd.X @ np.asarray(beta, dtype=float))
    wt = wd.w * family.nu(eta) * family.d_inverse_link(eta)
    return (wd.X * wt[:, None]).T @ wd.X


# ----------------------------------------------------------------------
# linear algebra
# ----------------------------------------------------------------------


def _column_label(j: int, names) -> str:
    if names and j < len(names):
        return f"column {j} ({names[j]})"
    return f"column {j}"


def solve_spd(A: np.ndarray, b: np.ndarray, names=()) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    Raises :class:`RankError` naming the first dependent column; warns with
    :class:`IllConditionedWarning` when cond(A) exceeds 1e12.
    """
    A = np.asarray(A, dtype=float)
    p = A.shape[0]
    diag = np.diag(A).copy()
    for j in range(p):
        if not diag[j] > 0:
            raise RankError(
                f"singular information matrix: {_column_label(j, names)} carries no weight",
                column=j,
                name=names[j] if names and j < len(names) else None,
            )
    scale = 1.0 / np.sqrt(diag)
    As = A * scale[:, None] * scale[None, :]
    try:
        L = linalg.cholesky(As, lower=True, check_finite=True)
    except linalg.LinAlgError:
        L = None
    if L is None or np.min(np.diag(L)) ** 2 <= _PIVOT_RTOL:
        j = _first_dependent_column(As)
        raise RankError(
            f"singular information matrix: {_column_label(j, names)} is linearly "
            "dependent on the preceding columns",
            column=j,
            name=names[j] if names and j < len(names) else None,
        )
    cond = np.linalg.cond(As)
    if cond > COND_WARN:
        warnings.warn(f"information matrix condition number {cond:.3g}", IllConditionedWarning, stacklevel=3)
    x = linalg.cho_solve((L, True), b * scale)
    return x * scale


def _first_dependent_column(As: np.ndarray) -> int:
    p = As.shape[0]
    for j in range(p):
        sub = As[: j + 1, : j + 1]
        try:
            L = np.linalg.cholesky(sub)
        except np.linalg.LinAlgError:
            return j
        if L[j, j] ** 2 <= _PIVOT_RTOL:
            return j
    return p - 1


# ----------------------------------------------------------------------
# solvers
# ----------------------------------------------------------------------


def wls_fit(data) -> FitResult:
    """Closed-form weighted least squares on (weighted) data."""
    wd = as_weighted(data)
    Xw = wd.X * wd.w[:, None]
    info = Xw.T @ wd.X
    beta = solve_spd(info, Xw.T @ wd.y, wd.columns)
    resid_score = Xw.T @ (wd.y - wd.X @ beta)
    return FitResult(
        beta=beta,
        iterations=1,
        converged=True,
        final_score_norm=float(np.max(np.abs(resid_score))),
        fisher_information=info,
    )


def default_init(wd: WeightedData, family: GlmFamily) -> np.ndarray:
    beta = np.zeros(wd.p)
    eta = wd.X @ beta
    ok = family.valid(eta).all() and (family.variance(eta) > 0).all()
    if ok:
        return beta
    eta0 = family.initial_eta(wd.y)
    Xw = wd.X * wd.w[:, None]
    return solve_spd(Xw.T @ wd.X, Xw.T @ eta0, wd.columns)


def _admissible(family: GlmFamily, eta: np.ndarray) -> bool:
    if not family.valid(eta).all():
        return False
    with np.errstate(all="ignore"):
        v = family.variance(eta)
    return bool(np.isfinite(v).all() and (v > 0).all())


def fisher_scoring_fit(
    data,
    family: GlmFamily,
    init=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FitResult:
    """Fisher scoring on weighted data with step halving.

    Weights are frequency weights, responses may be fractional (e.g. the
    weighted-average responses of representative points).  Converged means
    the last step had sup-norm at most ``tol`` and the score at the returned
    beta has sup-norm at most ``tol * (1 + |beta|_inf)``.  Hitting
    ``max_iter`` returns ``converged=False``.
    """
    wd = as_weighted(data)
    X, y, w = wd.X, wd.y, wd.w
    beta = default_init(wd, family) if init is None else np.array(init, dtype=float)
    if beta.shape != (wd.p,):
        raise ValueError(f"init has shape {beta.shape}, expected ({wd.p},)")

    eta = family.check(X @ beta)
    ll = float(np.dot(w, family.log_likelihood_terms(y, eta)))
    converged = False
    score_norm = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        nu = family.nu(eta)
        gp = family.d_inverse_link(eta)
        s = X.T @ (w * (y - family.inverse_link(eta)) * nu)
        info = (X * (w * nu * gp)[:, None]).T @ X
        step = solve_spd(info, s, wd.columns)

        t = 1.0
        for _ in range(40):
            cand = beta + t * step
            eta_c = X @ cand
            if _admissible(family, eta_c):
                with np.errstate(all="ignore"):
                    ll_c = float(np.dot(w, family.log_likelihood_terms(y, eta_c)))
                if np.isfinite(ll_c) and ll_c >= ll - 1e-10 * (1.0 + abs(ll)):
                    break
            t *= 0.5
        else:
            break
        delta = t * step
        beta, eta, ll = cand, eta_c, ll_c

        if np.max(np.abs(delta)) <= tol:
            s = X.T @ (w * (y - family.inverse_link(eta)) * family.nu(eta))
            score_norm = float(np.max(np.abs(s)))
            if score_norm <= tol * (1.0 + float(np.max(np.abs(beta)))):
                converged = True
                break

    nu = family.nu(eta)
    s = X.T @ (w * (y - family.inverse_link(eta)) * nu)
    score_norm = float(np.max(np.abs(s)))
    info = (X * (w * nu * family.d_inverse_link(eta))[:, None]).T @ X
    return FitResult(
        beta=beta,
        iterations=it,
        converged=converged,
        final_score_norm=score_norm,
        fisher_information=info,
    )


def fit(data, family: GlmFamily, init=None, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> FitResult:
    """Dispatch: closed-form WLS for the identity link with normal responses, else Fisher scoring."""
    if family.family == "normal" and family.link == "identity" and init is None:
        return wls_fit(data)
    return fisher_scoring_fit(data, family, init=init, tol=tol, max_iter=max_iter)
