"""Independent reference implementations used only by the tests.

Nothing here imports the package's numerical code: distributions come from
scipy.stats, inverse links are written out directly, and the solvers are
plain textbook versions.
"""

import numpy as np
from scipy import optimize, stats

INV_LINK = {
    "identity": lambda e: e,
    "logit": lambda e: 1.0 / (1.0 + np.exp(-e)),
    "probit": lambda e: stats.norm.cdf(e),
    "cloglog": lambda e: 1.0 - np.exp(-np.exp(e)),
    "loglog": lambda e: np.exp(-np.exp(e)),
    "cauchit": lambda e: 0.5 + np.arctan(e) / np.pi,
    "log": lambda e: np.exp(e),
    "reciprocal": lambda e: 1.0 / e,
    "inverse-squared": lambda e: 1.0 / np.sqrt(e),
}


def loglik(family, link, X, y, beta, w=None):
    """Log-likelihood with dispersion 1, via scipy.stats."""
    w = np.ones(len(y)) if w is None else w
    mu = INV_LINK[link](X @ beta)
    if family == "normal":
        terms = stats.norm.logpdf(y, loc=mu, scale=1.0)
    elif family == "bernoulli":
        terms = y * np.log(mu) + (1 - y) * np.log1p(-mu)
    elif family == "poisson":
        terms = stats.poisson.logpmf(y, mu)
    elif family == "gamma":
        terms = stats.gamma.logpdf(y, a=1.0, scale=mu)
    else:
        terms = stats.invgauss.logpdf(y, mu)
    return float(np.dot(w, terms))


def numeric_gradient(f, beta, h=1e-3):
    """Five-point central differences."""
    g = np.empty_like(beta)
    for j in range(beta.size):
        e = np.zeros_like(beta)
        e[j] = h
        g[j] = (-f(beta + 2 * e) + 8 * f(beta + e) - 8 * f(beta - e) + f(beta - 2 * e)) / (12 * h)
    return g


def newton_logit(X, y, w=None, tol=1e-12, max_iter=100):
    """Damped Newton on the logistic negative log-likelihood."""
    w = np.ones(len(y)) if w is None else w

    def nll(b):
        e = X @ b
        return float(np.dot(w, np.logaddexp(0.0, e) - y * e))

    b = np.zeros(X.shape[1])
    for _ in range(max_iter):
        p = 1.0 / (1.0 + np.exp(-(X @ b)))
        g = X.T @ (w * (p - y))
        H = (X * (w * p * (1 - p))[:, None]).T @ X
        step = np.linalg.solve(H, g)
        t, f0 = 1.0, nll(b)
        while nll(b - t * step) > f0 and t > 1e-10:
            t *= 0.5
        b = b - t * step
        if np.max(np.abs(t * step)) < tol:
            break
    return b


def bisect_root(f, a, b, xtol=1e-12):
    """Plain bisection on [a, b] (f(a), f(b) of opposite signs)."""
    fa = f(a)
    while b - a > xtol:
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0:
            return m
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def all_roots(f, lo, hi, n=4001):
    """Roots of f on [lo, hi] from a fine scan refined with brentq."""
    xs = np.linspace(lo, hi, n)
    fs = np.array([f(x) for x in xs])
    roots = [x for x, v in zip(xs, fs) if v == 0]
    for i in range(n - 1):
        if fs[i] != 0 and fs[i + 1] != 0 and np.sign(fs[i]) != np.sign(fs[i + 1]):
            roots.append(optimize.brentq(f, xs[i], xs[i + 1], xtol=1e-15, rtol=1e-15))
    return sorted(roots)


def pairwise_diameter(P):
    best = 0.0
    for i in range(len(P)):
        for j in range(i + 1, len(P)):
            best = max(best, float(np.linalg.norm(P[i] - P[j])))
    return best


def best_of_lloyd(Z, K, restarts=100, iters=100):
    """Multi-restart Lloyd with random initial centers; returns the labels of
    the run with the smallest within-cluster sum of squares."""
    rng = np.random.default_rng(12345)
    best, best_obj = None, np.inf
    for _ in range(restarts):
        C = Z[rng.choice(len(Z), K, replace=False)].copy()
        for _ in range(iters):
            lab = np.argmin(((Z[:, None, :] - C[None]) ** 2).sum(-1), axis=1)
            newC = np.array([Z[lab == k].mean(0) if (lab == k).any() else C[k] for k in range(K)])
            if np.allclose(newC, C):
                break
            C = newC
        obj = ((Z - C[lab]) ** 2).sum()
        if obj < best_obj:
            best, best_obj = lab, obj
    return best, best_obj


def block_scores(family_nu, family_G, X, y, beta, row_point, m):
    """Per-point score sums recomputed from raw rows with explicit loops over points."""
    eta = X @ beta
    r = family_nu(eta) * (y - family_G(eta))
    out = np.zeros((m, X.shape[1]))
    for k in range(m):
        rows = np.flatnonzero(row_point == k)
        out[k] = (X[rows] * r[rows, None]).sum(axis=0)
    return out
