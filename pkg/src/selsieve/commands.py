"""Command implementations behind the CLI.

Each ``cmd_*`` function does the work and returns a plain result object;
rendering to json/csv/table text lives in ``render``.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import BasisSpec
from .baselines import lee_bounds
from .data import EstimationRequest, fmt_float, load_csv, mc_configs_from_file, read_csv, write_csv
from .dgp import DgpSpec, builtin_spec, draw_sample
from .errors import DataError, OneClassOnly
from .first_stage import expand, fit_sieve_binary, linear_index_design, lr_nonlinearity_test
from .montecarlo import DISPLAY, McResult, run_mc
from .numerics import stream
from .second_stage import sls_estimate

log = logging.getLogger(__name__)


@dataclass
class EstimateReport:
    names: list
    beta: np.ndarray
    se_classical: np.ndarray
    se_robust: np.ndarray
    n: int
    n_selected: int
    diagnostic: dict
    K_first: int = 0
    K_second: int = 0
    robust: bool = False
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "n_selected": self.n_selected,
            "K_first": self.K_first,
            "K_second": self.K_second,
            "coefficients": [
                {"name": nm, "beta": float(b), "se_classical": float(sc), "se_robust": float(sr)}
                for nm, b, sc, sr in zip(self.names, self.beta, self.se_classical, self.se_robust)],
            "first_stage_lr": self.diagnostic,
            "warnings": list(self.warnings),
        }


def _design(request: EstimationRequest):
    data = load_csv(request.data_path, request)
    X = data.matrix(request.covariate_cols)
    D = data[request.selection_col]
    Y = np.where(D == 1, np.nan_to_num(data[request.outcome_col]), 0.0)
    cont = [request.covariate_cols.index(c) for c in request.continuous_cols]
    return Y, X, D, cont


def _lr_diagnostic(D, X, Xexp, alpha):
    sieve = fit_sieve_binary(D, Xexp)
    Xlin = linear_index_design(X)
    lin = fit_sieve_binary(D, Xlin)
    test = lr_nonlinearity_test(sieve.loglik, Xexp.shape[1], lin.loglik, Xlin.shape[1])
    diag = {"status": "ok", "loglik_sieve": test.loglik_sieve,
            "loglik_linear": test.loglik_linear, "statistic": test.statistic,
            "df": test.df, "p_value": test.p_value, "alpha": alpha,
            "reject_linearity": bool(test.reject(alpha)),
            "first_stage_converged": bool(sieve.converged)}
    return sieve, diag


def cmd_estimate(request: EstimationRequest) -> EstimateReport:
    """Two-step estimation on a CSV file.

    Step 1 fits the sieve probit on all rows and runs the linearity
    diagnostic; step 2 runs sieve least squares on the selected rows.
    """
    Y, X, D, cont = _design(request)
    n = Y.size
    warnings = []
    Xexp, _ = expand(X, cont, BasisSpec(n_interior_knots=request.knots_first),
                     interact=request.interact_dummies, names=request.covariate_cols)
    try:
        sieve, diag = _lr_diagnostic(D, X, Xexp, request.alpha)
        p_hat = sieve.p_hat
        if not diag["reject_linearity"]:
            warnings.append(f"linearity of the selection index is not rejected "
                            f"(p = {diag['p_value']:.4g}); identification is suspect")
        if sieve.separation:
            warnings.append("first stage shows quasi-separation; fitted probabilities are clamped")
    except OneClassOnly as exc:
        diag = {"status": "unavailable", "reason": str(exc)}
        warnings.append("selection indicator is constant; no selection correction is possible, "
                        "estimates are plain OLS")
        p_hat = np.full(n, float(D[0]))
    fit = sls_estimate(Y, X, D, p_hat, BasisSpec(n_interior_knots=request.knots_second))
    return EstimateReport(list(request.covariate_cols), fit.beta, fit.se_classical,
                          fit.se_robust, n, fit.n_selected, diag, Xexp.shape[1], fit.K2,
                          request.robust, warnings)


@dataclass
class DiagnoseReport:
    loglik_sieve: float
    loglik_linear: float
    statistic: float
    df: int
    p_value: float
    alpha: float
    reject: bool

    def to_dict(self) -> dict:
        return {"loglik_sieve": self.loglik_sieve, "loglik_linear": self.loglik_linear,
                "statistic": self.statistic, "df": self.df, "p_value": self.p_value,
                "alpha": self.alpha, "reject_linearity": self.reject}


def cmd_diagnose(request: EstimationRequest) -> DiagnoseReport:
    """Likelihood-ratio test of a linear probit selection index against the sieve."""
    _, X, D, cont = _design(request)
    Xexp, _ = expand(X, cont, BasisSpec(n_interior_knots=request.knots_first),
                     interact=request.interact_dummies)
    _, d = _lr_diagnostic(D, X, Xexp, request.alpha)
    return DiagnoseReport(d["loglik_sieve"], d["loglik_linear"], d["statistic"], d["df"],
                          d["p_value"], request.alpha, d["reject_linearity"])


def cmd_simulate(spec: DgpSpec | str, n: int, seed: int, out_path,
                 include_latent: bool = False) -> Path:
    """Draw one sample and write it as CSV (x1..xk, D, Y[, p0, Y_star])."""
    if isinstance(spec, str):
        spec = builtin_spec(spec, n=n)
    sample = draw_sample(spec, stream(seed, 0), n=n)
    header = [f"x{j + 1}" for j in range(spec.d_x)] + ["D", "Y"]
    cols = [sample.X[:, j] for j in range(spec.d_x)] + [sample.D, sample.Y]
    if include_latent:
        header += ["p0", "Y_star"]
        cols += [sample.p0, sample.Y_star]
    out_path = Path(out_path)
    write_csv(out_path, header, zip(*(c.tolist() for c in cols)))
    return out_path


@dataclass
class LeeReport:
    rows: list

    def to_dict(self) -> dict:
        return {"bounds": self.rows}


def cmd_lee_bounds(data_path, outcome: str, selection: str, treatment: str,
                   group_by: str | None = None) -> LeeReport:
    cols = [outcome, selection, treatment] + ([group_by] if group_by else [])
    data = read_csv(data_path, cols, binary=[selection, treatment])
    for c in cols[1:]:
        if data.missing[c].any():
            raise DataError(f"{data_path}: line {int(np.argmax(data.missing[c])) + 2}, "
                            f"column {c!r}: value is missing")
    Y, S, T = data[outcome], data[selection], data[treatment]
    bad = np.isnan(Y) & (S == 1)
    if bad.any():
        raise DataError(f"{data_path}: line {int(np.argmax(bad)) + 2}, column {outcome!r}: "
                        "outcome is missing for a selected observation")
    groups = [("all", np.ones(data.n, dtype=bool))]
    if group_by:
        groups = [(fmt_float(g), data[group_by] == g) for g in np.unique(data[group_by])]
    rows = []
    for label, mask in groups:
        b = lee_bounds(Y[mask], S[mask], T[mask])
        rows.append({"group": label, "n": int(mask.sum()), "lower": b.lower,
                     "upper": b.upper, "trim_proportion": b.trim_proportion})
    return LeeReport(rows)


def cmd_mc(config_path, out_dir, seed: int | None = None) -> list:
    """Run every design in the config; write summary, box-plot and per-replication files.

    ``seed`` overrides the configured base seed.
    """
    configs = mc_configs_from_file(config_path)
    if seed is not None:
        for c in configs:
            c.base_seed = int(seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = [run_mc(c) for c in configs]
    (out_dir / "summary.txt").write_text(summary_table(results), encoding="utf-8")
    write_csv(out_dir / "summary.csv", ["design", "estimator", "parameter", "rmse", "bias",
                                        "n_reps", "n_failed_reps"],
              _summary_rows(results))
    write_csv(out_dir / "boxplot.csv",
              ["design", "estimator", "parameter", "truth", "median", "q25", "q75",
               "whisker_lo", "whisker_hi", "n_outliers", "outliers"],
              _boxplot_rows(results))
    write_csv(out_dir / "estimates.csv", ["design", "rep", "estimator", "parameter", "value"],
              _record_rows(results))
    bounds = [(r.summary.design, r.summary.bounds) for r in results if r.summary.bounds]
    if bounds:
        write_csv(out_dir / "bounds.csv", ["design", "truth", "contains_truth",
                                           "contains_zero", "mean_width"],
                  [(d, b["truth"], b["contains_truth"], b["contains_zero"], b["mean_width"])
                   for d, b in bounds])
    return results


def _point_estimators(res: McResult) -> list:
    return [e for e in res.config.estimators if e != "lee"]


def _summary_rows(results):
    for res in results:
        s = res.summary
        for est in _point_estimators(res):
            for p, st in s.stats[est].items():
                yield (s.design, est, p, st.rmse, st.bias, st.n_reps, st.n_failed_reps)


def _boxplot_rows(results):
    for res in results:
        s = res.summary
        for est, per in s.stats.items():
            for p, st in per.items():
                truth = s.bounds["truth"] if est == "lee" else s.truth[s.param_names.index(p)]
                yield (s.design, est, p, float(truth), st.median, st.q25, st.q75,
                       st.whisker_lo, st.whisker_hi, st.n_outliers,
                       " ".join(fmt_float(o) for o in st.outliers))


def _record_rows(results):
    for res in results:
        for est, rec in res.records.items():
            names = ("lower", "upper") if est == "lee" else res.summary.param_names
            for r in range(rec.shape[0]):
                for j, p in enumerate(names):
                    yield (res.summary.design, r, est, p, float(rec[r, j]))


def summary_table(results) -> str:
    """Text table shaped like the published RMSE/Bias tables.

    Rows are RMSE and Bias per parameter; columns are design x estimator.
    """
    columns = [(res, est) for res in results for est in _point_estimators(res)]
    params = []
    for res in results:
        params += [p for p in res.summary.param_names if p not in params]
    width = 10
    head1 = " " * 16 + "".join(f"{res.summary.design:^{width * len(_point_estimators(res))}}"
                               for res in results)
    head2 = " " * 16 + "".join(f"{DISPLAY[est]:>{width}}" for _, est in columns)
    lines = [head1.rstrip(), head2]
    for stat in ("rmse", "bias"):
        for p in params:
            label = f"{stat.upper():<6}{p:<10}"
            cells = []
            for res, est in columns:
                st = res.summary.stats[est].get(p)
                cells.append(f"{getattr(st, stat):>{width}.3f}" if st else " " * width)
            lines.append(label + "".join(cells))
    for res in results:
        b = res.summary.bounds
        if b:
            lines.append(f"Lee bounds ({res.summary.design}): contain truth {b['contains_truth']:.3f}, "
                         f"contain zero {b['contains_zero']:.3f}, mean width {b['mean_width']:.3f}")
        failed = {e: len(f) for e, f in res.failures.items() if f}
        if failed:
            lines.append(f"failed replications ({res.summary.design}): "
                         + ", ".join(f"{DISPLAY[e]} {k}" for e, k in failed.items()))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# rendering

def render(report, fmt: str) -> str:
    """Render a report object as json, csv or a text table."""
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2) + "\n"
    if isinstance(report, EstimateReport):
        return _render_estimate(report, fmt)
    rows = report.rows if isinstance(report, LeeReport) else [report.to_dict()]
    if fmt == "csv":
        buf = io.StringIO()
        keys = list(rows[0])
        buf.write(",".join(keys) + "\n")
        for row in rows:
            buf.write(",".join(_cell(row[k]) for k in keys) + "\n")
        return buf.getvalue()
    return "\n".join("  ".join(f"{k}={_cell(v)}" for k, v in row.items()) for row in rows) + "\n"


def _cell(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return str(v)


def _render_estimate(rep: EstimateReport, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        buf.write("name,beta,se_classical,se_robust\n")
        for nm, b, sc, sr in zip(rep.names, rep.beta, rep.se_classical, rep.se_robust):
            buf.write(f"{nm},{fmt_float(b)},{fmt_float(sc)},{fmt_float(sr)}\n")
        return buf.getvalue()
    se_label = "robust s.e." if rep.robust else "s.e."
    lines = [f"n = {rep.n}, selected = {rep.n_selected}, "
             f"first-stage columns = {rep.K_first}, lambda basis = {rep.K_second}",
             f"{'variable':<16}{'coef':>10}{se_label:>14}"]
    se = rep.se_robust if rep.robust else rep.se_classical
    for nm, b, s in zip(rep.names, rep.beta, se):
        lines.append(f"{nm:<16}{b:>10.4f}{'(' + format(s, '.4f') + ')':>14}")
    d = rep.diagnostic
    if d.get("status") == "ok":
        lines.append(f"first-stage LR linearity test: stat = {d['statistic']:.3f}, "
                     f"df = {d['df']}, p = {d['p_value']:.4g}")
    else:
        lines.append(f"first-stage LR linearity test unavailable: {d.get('reason', '')}")
    lines += [f"warning: {w}" for w in rep.warnings]
    return "\n".join(lines) + "\n"
