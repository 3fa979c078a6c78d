import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import expit

from repreg.errors import ConfigError, DataFormatError, GenerationError
from repreg.glm import GlmFamily, fit
from repreg.partition import discretize_column
from repreg.simgen import (
    AIRLINE_BETA,
    AIRLINE_BETA_PRIME,
    AIRLINE_COLUMNS,
    DISTRIBUTIONS,
    SimConfig,
    default_beta,
    gen_airline_like,
    gen_covariates,
    gen_response,
    interaction_expand,
    read_csv,
    simulate,
    write_csv,
)

N = 100_000

# (mean, variance, mu4 - var^2) per column j (1-based) for each design
MOMENTS = {
    "mzNormal": lambda j: (0.0, 1.0, 2.0),
    "nzNormal": lambda j: (1.5, 1.0, 2.0),
    "ueNormal": lambda j: (0.0, j**2, 2.0 * j**4),
    "mixNormal": lambda j: (0.0, 2.0, 6.0),
    "EXP": lambda j: (0.5, 0.25, 0.5),
    "BETA": lambda j: (0.5, 0.125, 0.5 / 64),
}


@pytest.mark.parametrize("dist", list(MOMENTS))
def test_covariate_moments(dist):
    Z = gen_covariates(SimConfig(dist=dist, n=N, seed=3))
    assert Z.shape == (N, 7)
    for j in range(1, 8):
        mean, var, kvar = MOMENTS[dist](j)
        col = Z[:, j - 1]
        assert abs(col.mean() - mean) <= 5 * np.sqrt(var / N)
        assert abs(col.var() - var) <= 5 * np.sqrt(kvar / N)


def test_covariate_support():
    assert gen_covariates(SimConfig(dist="EXP", n=N, seed=1)).min() >= 0.0
    B = gen_covariates(SimConfig(dist="BETA", n=N, seed=1))
    assert B.min() >= 0.0 and B.max() <= 1.0


@pytest.mark.parametrize("dist, cov", [("mzNormal", 0.5), ("nzNormal", 0.5), ("ueNormal", 0.5), ("mixNormal", 1.5)])
def test_off_diagonal_covariance(dist, cov):
    Z = gen_covariates(SimConfig(dist=dist, n=N, seed=4))
    S = np.cov(Z, rowvar=False)
    off = S[~np.eye(7, dtype=bool)]
    # 5 sigma for a product of variables with variances up to 49
    scale = 1.0 if dist != "ueNormal" else 7.0 * 7.0
    assert np.max(np.abs(off - cov)) <= 5 * np.sqrt(2 * scale / N) + 1e-12


def test_mznormal_covariance_within_003():
    Z = gen_covariates(SimConfig(dist="mzNormal", n=N, seed=5))
    Sigma = np.full((7, 7), 0.5) + 0.5 * np.eye(7)
    assert np.max(np.abs(np.cov(Z, rowvar=False) - Sigma)) <= 0.03


def test_t3_marginals_are_scaled_t():
    Z = gen_covariates(SimConfig(dist="T3", n=20_000, seed=6))
    for j in range(7):
        p = stats.kstest(10.0 * Z[:, j], stats.t(df=3).cdf).pvalue
        assert p > 1e-4


def test_reproducible_and_seed_sensitive():
    a = simulate(SimConfig(dist="T3", n=1000, seed=7))
    b = simulate(SimConfig(dist="T3", n=1000, seed=7))
    c = simulate(SimConfig(dist="T3", n=1000, seed=8))
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.X, c.X)


def test_linear_without_noise_is_exact():
    cfg = SimConfig(n=500, model="linear", sigma=0.0, seed=9)
    data = simulate(cfg)
    assert np.array_equal(data.y, data.X @ cfg.beta)


def test_logit_zero_beta_is_fair_coin():
    cfg = SimConfig(n=N, beta=np.zeros(8), seed=10)
    y = simulate(cfg).y
    assert set(np.unique(y)) == {0.0, 1.0}
    assert abs(y.mean() - 0.5) <= 5 * np.sqrt(0.25 / N)


@pytest.mark.parametrize("model", ["cloglog", "poisson"])
def test_response_means(model):
    cfg = SimConfig(n=N, model=model, seed=11, beta=np.r_[0.1, np.full(7, 0.1)])
    data = simulate(cfg)
    eta = data.X @ cfg.beta
    mu = 1 - np.exp(-np.exp(eta)) if model == "cloglog" else np.exp(eta)
    var = mu * (1 - mu) if model == "cloglog" else mu
    assert abs(data.y.mean() - mu.mean()) <= 5 * np.sqrt(var.sum()) / N


def test_poisson_overflow():
    cfg = SimConfig(n=10, model="poisson", beta=np.full(8, 20.0), dist="nzNormal", seed=0)
    with pytest.raises(GenerationError, match="smaller"):
        simulate(cfg)


def test_default_beta():
    assert list(default_beta()) == [0.0] + [0.5] * 7


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(dist="uniform")
    with pytest.raises(ConfigError):
        SimConfig(n=0)
    with pytest.raises(ConfigError):
        SimConfig(model="logit-interactions", d=4)
    assert SimConfig(model="logit-interactions", d=3).p == 8


def test_full_fit_rmse_at_desk_scale():
    # about 3.7e-3 at N=1e6, so about sqrt(10) times that at N=1e5
    fam = GlmFamily("bernoulli", "logit")
    vals = []
    for seed in range(20):
        cfg = SimConfig(n=N, seed=1000 + seed)
        b = fit(simulate(cfg), fam).beta
        vals.append(np.sqrt(np.mean((b[1:] - cfg.beta[1:]) ** 2)))
    expected = 3.7e-3 * np.sqrt(10)
    se = 0.9e-3 * np.sqrt(10) / np.sqrt(20)
    assert abs(np.mean(vals) - expected) <= 3 * se


# -- interactions -------------------------------------------------------------


@pytest.mark.parametrize(
    "x, out",
    [((0, 0, 0), [1, 0, 0, 0, 0, 0, 0, 0]), ((1, 1, 1), [1] * 8), ((2, 3, 4), [1, 2, 3, 4, 6, 8, 12, 24])],
)
def test_interaction_expand(x, out):
    assert list(interaction_expand(np.array(x, dtype=float))) == out


def test_interaction_design():
    cfg = SimConfig(model="logit-interactions", d=3, n=200, seed=12)
    data = simulate(cfg)
    assert data.X.shape == (200, 8)
    assert np.allclose(data.X[:, 7], data.X[:, 1] * data.X[:, 2] * data.X[:, 3])
    with pytest.raises(ConfigError):
        interaction_expand(np.zeros(4))


# -- airline-schema generator ---------------------------------------------------


def _airline_rate(beta):
    """Expected delay rate with uniform levels, QUARTER uniform and DISTANCE
    uniform on [8, 4983], by quadrature."""
    total = 0.0
    for q in range(4):
        for dw in range(7):
            for bl in range(4):
                c = beta[0] + (beta[q] if q else 0) + (beta[3 + dw] if dw else 0) + (beta[9 + bl] if bl else 0)
                v, _ = integrate.quad(lambda x: expit(c + beta[13] * x), 8, 4983)
                total += v / (4983 - 8)
    return total / (4 * 7 * 4)


def test_airline_delay_rate():
    oracle = _airline_rate(AIRLINE_BETA)
    assert 0.15 <= oracle <= 0.25
    data = gen_airline_like(12, 20_000, AIRLINE_BETA, seed=13)
    n = data.n
    assert abs(data.y.mean() - oracle) <= 5 * np.sqrt(oracle * (1 - oracle) / n)


def test_airline_beta_prime():
    assert AIRLINE_BETA_PRIME[-1] == pytest.approx(10 * AIRLINE_BETA[-1])
    assert np.array_equal(AIRLINE_BETA_PRIME[:-1], AIRLINE_BETA[:-1])
    data = gen_airline_like(12, 5000, AIRLINE_BETA_PRIME, seed=14)
    oracle = _airline_rate(AIRLINE_BETA_PRIME)
    assert abs(data.y.mean() - oracle) <= 5 * np.sqrt(oracle * (1 - oracle) / data.n)


def test_airline_schema():
    data = gen_airline_like(12, 1000, seed=15)
    assert data.columns == AIRLINE_COLUMNS
    assert data.p == 14
    X = data.X
    assert X[:, 13].min() >= 8 and X[:, 13].max() <= 4983
    # dummy blocks are one-hot (at most one level on, the reference when none)
    for lo, hi in ((1, 4), (4, 10), (10, 13)):
        assert set(np.unique(X[:, lo:hi].sum(axis=1))) <= {0.0, 1.0}
    # QUARTER is fixed within a month
    month = data.keys["month"]
    for m in range(1, 13):
        q = X[month == m, 1:4]
        assert np.all(q == q[0])
    # DistanceBlk is the within-month equal-depth label of DISTANCE
    sel = month == 5
    lab, _ = discretize_column(X[sel, 13], 8)
    assert np.array_equal(data.keys["DistanceBlk"][sel], lab + 1)


def test_airline_validation():
    with pytest.raises(ConfigError):
        gen_airline_like(2, 10, beta=np.zeros(5))
    with pytest.raises(ConfigError):
        gen_airline_like(0, 10)


# -- CSV ---------------------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    data = gen_airline_like(2, 50, seed=16)
    path = tmp_path / "air.csv"
    write_csv(data, path)
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header.startswith("y,QUARTER2,")
    assert header.endswith("key:month,key:DayOfWeek,key:DepTimeBlk,key:DistanceBlk")
    back = read_csv(path)
    assert np.array_equal(back.X, data.X) and np.array_equal(back.y, data.y)
    assert back.columns == data.columns
    for k in data.keys:
        assert np.array_equal(back.keys[k], data.keys[k])


def test_csv_without_intercept(tmp_path):
    data = simulate(SimConfig(n=20, seed=17))
    path = tmp_path / "d.csv"
    write_csv(data, path)
    back = read_csv(path, intercept=False)
    assert np.array_equal(back.X, data.X[:, 1:])


@pytest.mark.parametrize(
    "body, line",
    [
        ("", 1),
        ("x1,y\n1,2\n", 1),
        ("y,x1\n1,2\n0,abc\n", 3),
        ("y,x1\n1,2\n1,2\n0\n", 4),
        ("y,x1\n1,nan\n", 2),
        ("y,x1\n", 2),
    ],
)
def test_csv_errors_have_line_numbers(tmp_path, body, line):
    path = tmp_path / "bad.csv"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(DataFormatError) as exc:
        read_csv(path)
    assert exc.value.line == line
    assert str(exc.value).startswith(f"line {line}:")


def test_all_distributions_generate():
    for dist in DISTRIBUTIONS:
        data = simulate(SimConfig(dist=dist, n=50, seed=18))
        assert np.all(np.isfinite(data.X))
        assert data.columns[0] == "(Intercept)"


def test_gen_response_uses_given_rng():
    cfg = SimConfig(n=100, seed=19)
    X = np.column_stack([np.ones(100), gen_covariates(cfg)])
    a = gen_response(X, cfg, np.random.Generator(np.random.Philox(5)))
    b = gen_response(X, cfg, np.random.Generator(np.random.Philox(5)))
    assert np.array_equal(a, b)
