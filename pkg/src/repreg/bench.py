"""Experiment runner: replicated simulations comparing the estimators, with
tidy CSV reports, plus the single-fit command used by the CLI."""

from __future__ import annotations

import configparser
import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.random import SeedSequence

from ._io import text_sink
from .baselines import dc_fit, full_fit
from .errors import ConfigError, ReprError
from .glm import Dataset, GlmFamily, family_from_name
from .partition import parse_partition_arg, read_partition
from .representatives import DEFAULT_T, representative_fit, smr_fit, write_representatives
from .simgen import (
    AIRLINE_BETA,
    AIRLINE_BETA_PRIME,
    DISTRIBUTIONS,
    SimConfig,
    gen_airline_like,
    read_csv,
    simulate,
)

METHODS = ("full", "mid", "median", "mr", "smr", "dc")
REPORT_COLUMNS = (
    "replication", "method", "rmse_true", "rmse_full", "fit_seconds", "k_used", "fallback_count", "status",
)
MODEL_FAMILY = {
    "linear": "normal-identity",
    "logit": "bernoulli-logit",
    "logit-interactions": "bernoulli-logit",
    "cloglog": "bernoulli-cloglog",
    "poisson": "poisson-log",
}


def model_family(model: str) -> GlmFamily:
    """Family for a simulation model tag, or any family name understood by
    :func:`family_from_name`."""
    return family_from_name(MODEL_FAMILY.get(model, model))


def rmse(beta_hat, beta_ref, coords=None, include_intercept: bool = False) -> float:
    """Root mean squared coordinate difference.  By default the intercept
    (coordinate 0) is excluded."""
    a = np.asarray(beta_hat, dtype=float)
    b = np.asarray(beta_ref, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if coords is None:
        coords = np.arange(a.size) if include_intercept else np.arange(1, a.size)
    coords = np.asarray(coords, dtype=np.int64)
    if coords.size == 0:
        return 0.0
    return float(np.sqrt(np.mean((a[coords] - b[coords]) ** 2)))


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    dist: str = "mzNormal"
    model: str = "logit"
    n: int = 100_000
    d: int = 7
    sigma: float = 1.0
    replications: int = 20
    seed: int = 0
    methods: tuple[str, ...] = ("full", "mr", "smr")
    partition: str = "kmeans:200"
    iterations: int = DEFAULT_T
    dc_blocks: int = 100
    include_intercept: bool = False
    workers: int = 1
    data: str = ""  # CSV path: load instead of simulating (responses are fixed across replications)
    months: int = 12
    rows_per_month: int = 10_000
    oracle: str = "beta"  # airline: beta | beta-prime
    timing: bool = True  # false leaves fit_seconds blank so reports are byte-reproducible
    out: str = ""

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
        if self.dist not in (*DISTRIBUTIONS, "airline"):
            raise ConfigError(f"unknown dist {self.dist!r}")
        if self.replications < 0:
            raise ConfigError("replications must be >= 0")
        if self.oracle not in ("beta", "beta-prime"):
            raise ConfigError("oracle must be beta or beta-prime")


def _as_bool(v: str) -> bool:
    v = v.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def load_config(path) -> ExperimentConfig:
    """Read an INI file; keys are taken from its ``[experiment]`` section
    (or the first section if that one is absent)."""
    cp = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not cp.sections():
        raise ConfigError(f"{path} has no [experiment] section")
    sec = cp["experiment"] if cp.has_section("experiment") else cp[cp.sections()[0]]
    return config_from_mapping(dict(sec))


def config_from_mapping(m: dict) -> ExperimentConfig:
    kw: dict = {}
    types = {f: t for f, t in ExperimentConfig.__annotations__.items()}
    for key, raw in m.items():
        key = key.strip().replace("-", "_")
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        raw = str(raw).strip()
        t = types[key]
        try:
            if t == "int":
                kw[key] = int(float(raw)) if "e" in raw.lower() else int(raw)
            elif t == "float":
                kw[key] = float(raw)
            elif t == "bool":
                kw[key] = _as_bool(raw)
            elif key == "methods":
                kw[key] = tuple(x.strip() for x in raw.split(",") if x.strip())
            else:
                kw[key] = raw
        except ValueError:
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return ExperimentConfig(**kw)


# ----------------------------------------------------------------------
# running
# ----------------------------------------------------------------------


@dataclass
class ExperimentReport:
    rows: list[dict] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)
    replications: int = 0

    def method_values(self, method: str, column: str) -> np.ndarray:
        return np.array([r[column] for r in self.rows if r["method"] == method and r["status"] == "ok"], dtype=float)

    def mean(self, method: str, column: str) -> float:
        v = self.method_values(method, column)
        return float(v.mean()) if v.size else float("nan")

    def write_csv(self, path) -> None:
        with text_sink(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            for r in [*self.rows, *self.summary]:
                w.writerow([_fmt(r[c]) for c in REPORT_COLUMNS])


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if np.isnan(v) else f"{v:.10g}"
    return str(v)


def replication_seeds(master: int, count: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in SeedSequence(int(master)).spawn(count)]


def make_data(cfg: ExperimentConfig, seed: int) -> tuple[Dataset, np.ndarray, GlmFamily]:
    """Dataset, true coefficients and family for one replication."""
    if cfg.dist == "airline":
        beta = AIRLINE_BETA if cfg.oracle == "beta" else AIRLINE_BETA_PRIME
        return gen_airline_like(cfg.months, cfg.rows_per_month, beta, seed), beta, family_from_name("logit")
    sc = SimConfig(dist=cfg.dist, n=cfg.n, d=cfg.d, sigma=cfg.sigma, model=cfg.model, seed=seed)
    return simulate(sc), sc.beta, model_family(cfg.model)


def _run_method(method, data, family, part, cfg, seed):
    if method == "full":
        return full_fit(data, family)
    if method == "dc":
        return dc_fit(data, family, cfg.dc_blocks, seed=seed)
    if method == "smr":
        return smr_fit(data, part, family, T=cfg.iterations)[0]
    return representative_fit(data, part, family, "mean" if method == "mr" else method)[0]


def run_replication(cfg: ExperimentConfig, rep: int, seed: int) -> list[dict]:
    if cfg.data:
        data = read_csv(cfg.data)
        family = model_family(cfg.model)
        truth = None
    else:
        data, truth, family = make_data(cfg, seed)
    part = parse_partition_arg(cfg.partition, data, seed=seed) if set(cfg.methods) - {"full", "dc"} else None
    t0 = time.perf_counter()
    ref = full_fit(data, family)
    full_seconds = time.perf_counter() - t0
    rows = []
    for method in cfg.methods:
        row = {"replication": rep, "method": method, "rmse_true": float("nan"), "rmse_full": float("nan"),
               "fit_seconds": float("nan"), "k_used": "", "fallback_count": "", "status": "ok"}
        try:
            if method == "full":
                res, secs = ref, full_seconds
            else:
                t0 = time.perf_counter()
                res = _run_method(method, data, family, part, cfg, seed)
                secs = time.perf_counter() - t0
        except (ReprError, ValueError) as exc:
            row["status"] = f"error: {exc}".replace("\n", " ")
            rows.append(row)
            continue
        if truth is not None:
            row["rmse_true"] = rmse(res.beta, truth, include_intercept=cfg.include_intercept)
        row["rmse_full"] = rmse(res.beta, ref.beta, include_intercept=cfg.include_intercept)
        row["fit_seconds"] = secs if cfg.timing else float("nan")
        row["k_used"] = int(res.extra.get("points", data.n))
        row["fallback_count"] = int(res.extra.get("fallbacks", 0))
        if not res.converged:
            row["status"] = "not-converged"
        rows.append(row)
    return rows


def _summarize(rows: list[dict], methods) -> list[dict]:
    out = []
    for stat in ("mean", "std"):
        for m in methods:
            sel = [r for r in rows if r["method"] == m and r["status"] in ("ok", "not-converged")]
            row = {"replication": stat, "method": m, "k_used": "", "fallback_count": "", "status": f"n={len(sel)}"}
            for col in ("rmse_true", "rmse_full", "fit_seconds"):
                v = np.array([r[col] for r in sel], dtype=float)
                v = v[~np.isnan(v)]
                if v.size == 0:
                    row[col] = float("nan")
                else:
                    row[col] = float(v.mean() if stat == "mean" else (v.std(ddof=1) if v.size > 1 else 0.0))
            out.append(row)
    return out


def run_experiment(cfg: ExperimentConfig | str, out=None) -> ExperimentReport:
    """Run all replications (in parallel when ``workers > 1``); rows are
    ordered by replication, then by the configured method order."""
    if not isinstance(cfg, ExperimentConfig):
        cfg = load_config(cfg)
    seeds = replication_seeds(cfg.seed, cfg.replications)
    if cfg.workers > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            chunks = list(ex.map(run_replication, [cfg] * len(seeds), range(len(seeds)), seeds))
    else:
        chunks = [run_replication(cfg, r, s) for r, s in enumerate(seeds)]
    rows = [r for c in chunks for r in c]
    report = ExperimentReport(rows, _summarize(rows, cfg.methods) if rows else [], cfg.replications)
    target = out or cfg.out
    if target:
        report.write_csv(target)
    return report


# ----------------------------------------------------------------------
# single fit (CLI ``fit``)
# ----------------------------------------------------------------------

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2


def fit_command(
    data_csv,
    family: str = "logit",
    method: str = "smr",
    partition: str | None = None,
    partition_file=None,
    iterations: int = DEFAULT_T,
    seed: int = 0,
    dc_blocks: int = 100,
    out=None,
    export_reps=None,
    log=print,
) -> int:
    """Fit one CSV file; writes a JSON report and returns the exit code
    (0 converged, 2 not converged, 1 input error)."""
    try:
        data = read_csv(data_csv)
        fam = model_family(family)
        if method not in METHODS:
            raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
        part = None
        if method not in ("full", "dc"):
            if partition_file:
                part = read_partition(partition_file, data.n)
            elif partition:
                part = parse_partition_arg(partition, data, seed=seed)
            else:
                raise ConfigError(f"method {method} needs --partition or --partition-file")
        t0 = time.perf_counter()
        reps = None
        if method == "full":
            res = full_fit(data, fam)
        elif method == "dc":
            res = dc_fit(data, fam, dc_blocks, seed=seed)
        elif method == "smr":
            res, hist = smr_fit(data, part, fam, T=iterations)
            reps = hist[-1]
        else:
            res, reps = representative_fit(data, part, fam, "mean" if method == "mr" else method)
        secs = time.perf_counter() - t0
    except (ReprError, ValueError, OSError) as exc:
        log(f"error: {exc}")
        return EXIT_INPUT
    report = {
        "method": method,
        "family": fam.family,
        "link": fam.link,
        "columns": list(data.columns),
        **res.to_dict(),
        "fit_seconds": secs,
    }
    report.setdefault("fallbacks", 0)
    text = json.dumps(report, indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        log(text)
    if export_reps and reps is not None:
        write_representatives(reps, export_reps)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED
