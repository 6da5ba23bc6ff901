"""Monte Carlo replication engine.

Replication ``r`` draws its sample from ``stream(base_seed, r)`` and runs
every requested estimator on that same sample.  Results are gathered in
replication order, so summaries do not depend on how the work was
scheduled across processes.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .basis import BasisSpec
from .dgp import DgpSpec, SimDataset, builtin_spec, draw_sample
from .errors import AllRepsFailed, ConfigError, DataError, NumericalError
from .first_stage import expand, fit_sieve_binary
from .numerics import stream
from .second_stage import sls_estimate

log = logging.getLogger(__name__)

ESTIMATORS = ("tpm", "hs2step", "hsmle", "sieve", "oracle", "lee")
DISPLAY = {"tpm": "TPM", "hs2step": "HS 2step", "hsmle": "HSM",
           "sieve": "Sieve", "oracle": "Oracle", "lee": "Lee"}


@dataclass
class McConfig:
    dgp: DgpSpec | str = "dgp1"
    estimators: tuple = ("tpm", "hsmle", "sieve", "oracle")
    n: int = 5000
    reps: int = 1000
    base_seed: int = 0
    knots_first: int = 5
    knots_second: int = 7
    max_parallel: int = 1
    lee_treatment: int | None = None

    def __post_init__(self):
        self.estimators = tuple(self.estimators)
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if not self.estimators:
            raise ConfigError("at least one estimator is required")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            raise ConfigError(f"unknown estimators {unknown}; choose from {list(ESTIMATORS)}")
        if self.max_parallel < 1:
            raise ConfigError("max_parallel must be at least 1")
        spec = self.spec
        if "lee" in self.estimators and self.treatment_col is None:
            raise ConfigError(f"design {spec.name!r} has no binary covariate for Lee bounds")

    @property
    def spec(self) -> DgpSpec:
        if isinstance(self.dgp, DgpSpec):
            spec = self.dgp
            if spec.n != self.n:
                spec = DgpSpec.from_dict({**spec.to_dict(), "n": self.n})
            return spec
        return builtin_spec(self.dgp, n=self.n)

    @property
    def treatment_col(self) -> int | None:
        if self.lee_treatment is not None:
            return self.lee_treatment
        spec = self.spec
        if spec.binary_treatment is not None:
            return spec.binary_treatment
        return spec.binary_cols[0] if spec.binary_cols else None


def sieve_estimate(sample: SimDataset, knots_first: int = 5, knots_second: int = 7):
    """Two-step sieve estimate on a simulated sample."""
    spec = sample.spec
    Xexp, _ = expand(sample.X, spec.continuous_cols, BasisSpec(n_interior_knots=knots_first))
    fs = fit_sieve_binary(sample.D, Xexp)
    fit = sls_estimate(sample.Y, sample.X, sample.D, fs.p_hat,
                       BasisSpec(n_interior_knots=knots_second))
    return fit, fs


def _run_one(est: str, sample: SimDataset, config: McConfig):
    """Return (values, warning) for one estimator; raises on failure."""
    Y, X, D = sample.Y, sample.X, sample.D
    if est == "tpm":
        return baselines.tpm_ols(Y, X, D).slopes, None
    if est == "hs2step":
        return baselines.heckman_two_step(Y, X, D).slopes, None
    if est == "hsmle":
        fit = baselines.heckman_mle(Y, X, D, compute_se=False)
        if not fit.converged:
            raise NumericalError(f"Heckman MLE did not converge "
                                 f"({fit.auxiliary['iterations']} iterations)")
        return fit.slopes, None
    if est == "oracle":
        return baselines.oracle_estimate(Y, X, D, sample.Zpoly).slopes, None
    if est == "sieve":
        fit, fs = sieve_estimate(sample, config.knots_first, config.knots_second)
        return fit.beta, ("first-stage quasi-separation" if fs.separation else None)
    if est == "lee":
        b = baselines.lee_bounds(Y, D, X[:, config.treatment_col])
        return np.array([b.lower, b.upper]), None
    raise ConfigError(f"unknown estimator {est!r}")


def run_replication(config: McConfig, r: int) -> dict:
    sample = draw_sample(config.spec, stream(config.base_seed, r))
    out = {}
    for est in config.estimators:
        try:
            values, warning = _run_one(est, sample, config)
            out[est] = (np.asarray(values, dtype=np.float64), None, warning)
        except (DataError, NumericalError, np.linalg.LinAlgError) as exc:
            out[est] = (None, f"{type(exc).__name__}: {exc}", None)
    return out


def _replicate(args):
    config, r = args
    return run_replication(config, r)


@dataclass
class ParamSummary:
    rmse: float
    bias: float
    median: float
    q25: float
    q75: float
    whisker_lo: float
    whisker_hi: float
    n_outliers: int
    outliers: tuple = ()
    n_reps: int = 0
    n_failed_reps: int = 0


@dataclass
class McSummary:
    design: str
    truth: np.ndarray
    param_names: tuple
    stats: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    n_warnings: dict = field(default_factory=dict)


@dataclass
class McResult:
    config: McConfig
    summary: McSummary
    records: dict
    failures: dict


def param_summary(values, truth: float, n_failed: int = 0) -> ParamSummary:
    """RMSE, bias and Tukey box-plot statistics of one parameter's estimates."""
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    if v.size == 0:
        raise AllRepsFailed("no successful replications to summarize")
    dev = v - truth
    q25, median, q75 = np.percentile(v, [25, 50, 75])
    iqr = q75 - q25
    inside = v[(v >= q25 - 1.5 * iqr) & (v <= q75 + 1.5 * iqr)]
    outliers = np.sort(v[(v < q25 - 1.5 * iqr) | (v > q75 + 1.5 * iqr)])
    return ParamSummary(
        rmse=float(np.sqrt(np.mean(dev * dev))), bias=float(np.mean(dev)),
        median=float(median), q25=float(q25), q75=float(q75),
        whisker_lo=float(inside.min()), whisker_hi=float(inside.max()),
        n_outliers=int(outliers.size), outliers=tuple(float(o) for o in outliers),
        n_reps=int(v.size), n_failed_reps=int(n_failed))


def summarize(records: dict, truth, param_names=None, design: str = "") -> McSummary:
    """Per-estimator, per-parameter summaries of replication records.

    ``records`` maps an estimator name to a ``reps x params`` array with NaN
    rows for failed replications.  Lee bounds records (lower, upper) are
    summarized against the treatment coefficient ``truth[treatment]`` passed
    as ``records['lee_truth']``.
    """
    truth = np.atleast_1d(np.asarray(truth, dtype=np.float64))
    names = tuple(param_names) if param_names else tuple(f"beta{j + 1}" for j in range(truth.size))
    summary = McSummary(design, truth, names)
    for est, rec in records.items():
        if est == "lee_truth":
            continue
        rec = np.atleast_2d(np.asarray(rec, dtype=np.float64))
        if rec.shape[0] == 1 and rec.shape[1] != (2 if est == "lee" else truth.size):
            rec = rec.T
        ok = np.all(np.isfinite(rec), axis=1)
        n_failed = int(np.sum(~ok))
        if est == "lee":
            target = float(records.get("lee_truth", np.nan))
            lo, hi = rec[ok, 0], rec[ok, 1]
            summary.stats[est] = {
                "lower": param_summary(lo, target, n_failed),
                "upper": param_summary(hi, target, n_failed)}
            summary.bounds = {
                "truth": target,
                "contains_truth": float(np.mean((lo <= target) & (target <= hi))),
                "contains_zero": float(np.mean((lo <= 0.0) & (0.0 <= hi))),
                "mean_width": float(np.mean(hi - lo))}
            continue
        summary.stats[est] = {name: param_summary(rec[ok, j], truth[j], n_failed)
                              for j, name in enumerate(names)}
    return summary


def run_mc(config: McConfig) -> McResult:
    """Run every replication and summarize."""
    spec = config.spec
    tasks = [(config, r) for r in range(config.reps)]
    if config.max_parallel > 1 and config.reps > 1:
        with ProcessPoolExecutor(max_workers=config.max_parallel) as pool:
            results = list(pool.map(_replicate, tasks, chunksize=max(1, config.reps // (8 * config.max_parallel))))
    else:
        results = [_replicate(t) for t in tasks]

    records, failures, warnings = {}, {}, {}
    for est in config.estimators:
        width = 2 if est == "lee" else spec.d_x
        rec = np.full((config.reps, width), np.nan)
        failures[est] = []
        warnings[est] = 0
        for r, res in enumerate(results):
            values, err, warn = res[est]
            if err is not None:
                failures[est].append((r, err))
                continue
            rec[r] = values
            warnings[est] += warn is not None
        if len(failures[est]) == config.reps:
            raise AllRepsFailed(f"estimator {est!r} failed in every replication; "
                                f"first error: {failures[est][0][1]}")
        if failures[est]:
            log.info("%s: %d of %d replications failed", est, len(failures[est]), config.reps)
        records[est] = rec

    to_summarize = dict(records)
    if "lee" in records:
        to_summarize["lee_truth"] = spec.beta[config.treatment_col + 1]
    summary = summarize(to_summarize, spec.slopes,
                        tuple(f"beta{j + 1}" for j in range(spec.d_x)), spec.name)
    summary.n_warnings = warnings
    return McResult(config, summary, records, failures)
