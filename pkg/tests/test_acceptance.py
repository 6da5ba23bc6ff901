"""Acceptance criteria, each checked at its stated tolerance.

Every criterion records one PASS/FAIL line (printed in the terminal summary)
before asserting.  Monte Carlo seeds are fixed here and were not tuned.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from selsieve.basis import BasisSpec, KnotVector, design_matrix, eval_basis
from selsieve.baselines import lee_bounds
from selsieve.cli import main
from selsieve.commands import cmd_estimate, cmd_simulate
from selsieve.data import EstimationRequest, write_csv
from selsieve.dgp import DgpSpec, builtin_spec, draw_sample
from selsieve.first_stage import diagnose, expand, probit_loglik, probit_score
from selsieve.montecarlo import McConfig, param_summary, run_mc
from selsieve.numerics import cholesky, inverse_mills, norm_cdf, stream
from selsieve.second_stage import sls_estimate

pytestmark = pytest.mark.slow

SEEDS = {"dgp0a": 101, "dgp0b": 102, "dgp1": 103, "dgp2": 104, "lee": 105,
         "power": 106, "size": 107}
TABLE_ESTIMATORS = ("tpm", "hsmle", "sieve", "oracle")


def record(k: int, checks: list) -> None:
    """checks: (description, value, ok) triples."""
    ok = all(c[2] for c in checks)
    detail = "; ".join(f"{d} = {v}" + ("" if good else " [out of range]")
                       for d, v, good in checks)
    ACCEPTANCE_LINES.append(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def fmt(x) -> str:
    return f"{x:.4f}"


_mc_cache: dict = {}


def table_mc(name: str):
    if name not in _mc_cache:
        t0 = time.perf_counter()
        res = run_mc(McConfig(dgp=name, estimators=TABLE_ESTIMATORS, n=5000, reps=1000,
                              base_seed=SEEDS[name]))
        _mc_cache[name] = (res, time.perf_counter() - t0)
    return _mc_cache[name]


def stat(res, est, param="beta1"):
    return res.summary.stats[est][param]


def with_mcse(res, est, param="beta1"):
    """Bias followed by its Monte Carlo standard error."""
    rec = res.records[est][:, res.summary.param_names.index(param)]
    rec = rec[np.isfinite(rec)]
    return f"{stat(res, est, param).bias:.4f} (MC s.e. {rec.std() / np.sqrt(rec.size):.4f})"


def test_criterion_01_table1_nonmonotone():
    res, seconds = table_mc("dgp0a")
    kl, tpm, orc = stat(res, "sieve"), stat(res, "tpm"), stat(res, "oracle")
    record(1, [
        ("Sieve RMSE in [0.065, 0.105]", fmt(kl.rmse), 0.065 <= kl.rmse <= 0.105),
        ("Sieve |bias| <= 0.012", with_mcse(res, "sieve"), abs(kl.bias) <= 0.012),
        ("TPM bias in [-0.56, -0.48]", fmt(tpm.bias), -0.56 <= tpm.bias <= -0.48),
        ("Oracle RMSE in [0.055, 0.090]", fmt(orc.rmse), 0.055 <= orc.rmse <= 0.090),
        ("runtime on one core <= 600 s", f"{seconds:.0f}s", seconds <= 600),
    ])


def test_criterion_02_table1_monotone():
    res, _ = table_mc("dgp0b")
    kl, hsm = stat(res, "sieve"), stat(res, "hsmle")
    record(2, [
        ("Sieve RMSE >= 0.20", fmt(kl.rmse), kl.rmse >= 0.20),
        ("HSM RMSE <= 0.09", fmt(hsm.rmse), hsm.rmse <= 0.09),
    ])


def test_criterion_03_table2_dgp1():
    res, _ = table_mc("dgp1")
    k1, k2 = stat(res, "sieve", "beta1"), stat(res, "sieve", "beta2")
    t1, t2 = stat(res, "tpm", "beta1"), stat(res, "tpm", "beta2")
    record(3, [
        ("Sieve RMSE(b1) in [0.045, 0.080]", fmt(k1.rmse), 0.045 <= k1.rmse <= 0.080),
        ("Sieve RMSE(b2) in [0.048, 0.085]", fmt(k2.rmse), 0.048 <= k2.rmse <= 0.085),
        ("Sieve |bias(b1)| <= 0.012", with_mcse(res, "sieve", "beta1"), abs(k1.bias) <= 0.012),
        ("Sieve |bias(b2)| <= 0.012", with_mcse(res, "sieve", "beta2"), abs(k2.bias) <= 0.012),
        ("TPM bias(b1) in [-0.29, -0.21]", fmt(t1.bias), -0.29 <= t1.bias <= -0.21),
        ("TPM bias(b2) in [-0.36, -0.28]", fmt(t2.bias), -0.36 <= t2.bias <= -0.28),
    ])


def test_criterion_04_table2_dgp2():
    res, _ = table_mc("dgp2")
    k1, k2 = stat(res, "sieve", "beta1"), stat(res, "sieve", "beta2")
    h2 = stat(res, "hsmle", "beta2")
    record(4, [
        ("Sieve RMSE(b1) in [0.042, 0.075]", fmt(k1.rmse), 0.042 <= k1.rmse <= 0.075),
        ("Sieve RMSE(b2) in [0.095, 0.175]", fmt(k2.rmse), 0.095 <= k2.rmse <= 0.175),
        ("Sieve |bias(b1)| <= 0.02", with_mcse(res, "sieve", "beta1"), abs(k1.bias) <= 0.02),
        ("Sieve |bias(b2)| <= 0.02", with_mcse(res, "sieve", "beta2"), abs(k2.bias) <= 0.02),
        ("HSM bias(b2) in [-0.37, -0.27]", fmt(h2.bias), -0.37 <= h2.bias <= -0.27),
    ])


def test_criterion_05_selection_rates():
    # Expected to fail: with the stated parameters the population rates are
    # 0.586, 0.658 and 0.519 (quadrature), against targets 0.60, 0.52, 0.66.
    targets = {"dgp0a": 0.60, "dgp1": 0.52, "dgp2": 0.66}
    checks = []
    for name, target in targets.items():
        s = draw_sample(builtin_spec(name), stream(SEEDS[name], 10**6), n=100_000)
        rate = float(s.D.mean())
        checks.append((f"mean(D) {name} = {target} +- 0.01", fmt(rate), abs(rate - target) <= 0.01))
    record(5, checks)


def test_criterion_06_lee_bounds_dgp2():
    res = run_mc(McConfig(dgp="dgp2", estimators=("lee",), n=20_000, reps=200,
                          base_seed=SEEDS["lee"]))
    b = res.summary.bounds
    record(6, [
        ("share containing 0 >= 0.99", fmt(b["contains_zero"]), b["contains_zero"] >= 0.99),
        ("share containing beta2 >= 0.95", fmt(b["contains_truth"]), b["contains_truth"] >= 0.95),
    ])


def _property_checks():
    rng = np.random.default_rng(7)
    checks = []

    # projection onto the lambda basis
    n = 300
    X = rng.standard_normal((n, 2))
    p = norm_cdf(0.3 + X[:, 0] - 0.5 * X[:, 0] ** 2)
    Y = X @ [0.5, 0.25] + (p - 0.5) ** 2 + rng.standard_normal(n)
    fit = sls_estimate(Y, X, np.ones(n), p)
    R = design_matrix(p, fit.knots)
    P = R @ np.linalg.solve(R.T @ R, R.T)
    err = max(np.abs(P @ P - P).max(), np.abs(P @ R - R).max())
    checks.append(("projection idempotence, P R = R", f"{err:.1e}", err <= 1e-8))
    Q = np.eye(n) - P
    QX = Q @ X
    b_fw = np.linalg.solve(QX.T @ QX, QX.T @ Q @ Y)
    err = np.abs(b_fw - fit.beta).max()
    checks.append(("Frisch-Waugh two routes", f"{err:.1e}", err <= 1e-9))
    b_pow = sls_estimate(Y, X, np.ones(n), p, BasisSpec(family="power", degree=3)).beta
    b_bsp = sls_estimate(Y, X, np.ones(n), p, BasisSpec(n_interior_knots=0)).beta
    err = np.abs(b_pow - b_bsp).max()
    checks.append(("lambda-basis span invariance", f"{err:.1e}", err <= 1e-9))

    kv = KnotVector(-2.0, 2.0, (-1.2, -0.5, 0.0, 0.4, 1.3), 3)
    err = max(abs(eval_basis(x, kv).sum() - 1.0) for x in np.linspace(-2, 2, 1001))
    checks.append(("partition of unity", f"{err:.1e}", err <= 1e-12))

    s = draw_sample(builtin_spec("dgp2", n=800), stream(2, 0))
    Xexp = expand(s.X, [0])[0]
    gamma = 0.1 * rng.standard_normal(Xexp.shape[1])
    g = probit_score(gamma, s.D, Xexp)
    h = 1e-6
    fd = np.array([(probit_loglik(gamma + h * e, s.D, Xexp)
                    - probit_loglik(gamma - h * e, s.D, Xexp)) / (2 * h)
                   for e in np.eye(gamma.size)])
    err = np.abs(fd - g).max() / np.abs(g).max()
    checks.append(("probit score vs finite difference", f"{err:.1e}", err <= 1e-4))

    v = 0.5 + 0.05 * rng.standard_normal(1000)
    ps = param_summary(v, 0.47)
    err = abs(ps.rmse ** 2 - ps.bias ** 2 - np.var(v)) / ps.rmse ** 2
    checks.append(("rmse^2 = bias^2 + var", f"{err:.1e}", err <= 1e-10))

    m = inverse_mills(-15.0)
    err = abs(m / (15 + 1 / 15 - 2 / 15 ** 3) - 1)
    checks.append(("inverse Mills at -15", f"{err:.1e}", bool(np.isfinite(m)) and err <= 1e-3))

    M = rng.standard_normal((5, 5))
    S = M @ M.T + 5 * np.eye(5)
    L = cholesky(S)
    err = np.abs(L @ L.T - S).max() / np.abs(S).max()
    checks.append(("Cholesky round trip", f"{err:.1e}", err <= 1e-10))
    return checks


def test_criterion_07_property_suites(tmp_path):
    checks = _property_checks()
    a = cmd_simulate("dgp2", 500, 7, tmp_path / "a.csv").read_bytes()
    b = cmd_simulate("dgp2", 500, 7, tmp_path / "b.csv").read_bytes()
    checks.append(("simulate byte-identical", a == b, a == b))
    cfg = tmp_path / "mc.toml"
    cfg.write_text('dgp = ["dgp1", "dgp2"]\nestimators = ["tpm", "sieve", "oracle"]\n'
                   "n = 600\nreps = 3\nseed = 9\n", encoding="utf-8")
    outs = []
    for d in ("o1", "o2"):
        assert main(["mc", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
        outs.append([(tmp_path / d / f).read_bytes()
                     for f in ("summary.csv", "boxplot.csv", "estimates.csv")])
    checks.append(("mc outputs byte-identical", outs[0] == outs[1], outs[0] == outs[1]))
    record(7, checks)


# slope coefficients from 50-digit augmented normal equations (see test_second_stage)
TINY = [
    ((12, 1, 1, (0.5,)), [0.5928571428571428912]),
    ((12, 1, 2, ()), [0.59285714285714289276]),
    ((15, 2, 3, (0.5,)), [0.47745097033648113609, 0.7497274141990124347]),
    ((20, 2, 3, (0.3, 0.7)), [0.58082624075810153078, 0.84017333251054891717]),
    ((18, 3, 1, (0.25, 0.6)), [0.46765176129851012078, 0.8370724444160193826,
                               0.91142125260908885674]),
]


def test_criterion_08_oracle_equivalence():
    checks = []
    for (n, d_x, deg, interior), expected in TINY:
        i = np.arange(n)
        p = (i + 1.0) / (n + 1.0)
        X = np.column_stack([((7 * i + 3 * j) % 13) / 13.0 + 0.1 * j * np.sin(i)
                             for j in range(d_x)])
        y = X @ (0.5 + 0.25 * np.arange(d_x)) + (p - 0.5) ** 2 + ((3 * i) % 5) / 10.0
        beta = sls_estimate(y, X, np.ones(n), p, knots=KnotVector(0.0, 1.0, interior, deg)).beta
        err = float(np.abs(beta - expected).max())
        checks.append((f"tiny n={n} d={d_x}", f"{err:.1e}", err <= 1e-9))
    Y = np.r_[1, 2, 3, 4, 5, 0, 0, 0, 2, 3, 0, 0, 0, 0, 0, 0].astype(float)
    S = np.r_[np.ones(5), np.zeros(3), np.ones(2), np.zeros(6)]
    T = np.r_[np.ones(8), np.zeros(8)]
    b = lee_bounds(Y, S, T)
    exact = (b.lower, b.upper) == (-1.0, 2.0)
    checks.append(("Lee hand example (-1, 2)", (b.lower, b.upper), exact))
    record(8, checks)


def test_criterion_09_diagnose_power_and_size():
    linear = DgpSpec(beta=(0.5, 0.5), alpha=(0.2, 0.8), terms=("1", "x1"), name="linear")
    power = np.mean([diagnose(s.D, s.X, [0]).reject(0.05)
                     for s in (draw_sample(builtin_spec("dgp0a"), stream(SEEDS["power"], r))
                               for r in range(200))])
    size = np.mean([diagnose(s.D, s.X, [0]).reject(0.05)
                    for s in (draw_sample(linear, stream(SEEDS["size"], r), n=5000)
                              for r in range(200))])
    record(9, [
        ("dgp0a rejection rate > 0.95", fmt(power), power > 0.95),
        ("linear-index rejection rate in 0.05 +- 0.025", fmt(size), abs(size - 0.05) <= 0.025),
    ])


def wage_dataset(rng, n):
    """Synthetic wage data: continuous age and experience, education and state dummies."""
    age = rng.uniform(18, 64, n)
    college = (rng.random(n) < 0.3).astype(float)
    highschool = ((rng.random(n) < 0.6) & (college == 0)).astype(float)
    school = 10 + 2 * highschool + 6 * college
    exper = np.clip(age - school - 6 - rng.uniform(0, 6, n), 0, None)
    state = rng.integers(0, 3, n)
    st1, st2 = (state == 1).astype(float), (state == 2).astype(float)
    # participation is hump-shaped in age
    h = -0.4 + 0.12 * (age - 18) - 0.0028 * (age - 18) ** 2 + 0.5 * college + 0.2 * highschool
    err = rng.multivariate_normal([0, 0], [[0.25, 0.2], [0.2, 1.0]], n)
    D = (h + err[:, 1] >= 0).astype(float)
    X = np.column_stack([age, exper, highschool, college, st1, st2])
    beta = np.array([0.01, 0.02, 0.15, 0.45, 0.05, -0.05])
    logwage = 1.5 + X @ beta + err[:, 0]
    return X, D, np.where(D == 1, logwage, np.nan), beta


def test_criterion_10_wage_workflow(tmp_path):
    X, D, Y, beta = wage_dataset(np.random.default_rng(2010), 8000)
    names = ["age", "exper", "highschool", "college", "state1", "state2"]
    write_csv(tmp_path / "wages.csv", ["logwage", "employed", *names],
              (row for row in np.column_stack([Y, D, X]).tolist()))
    rep = cmd_estimate(EstimationRequest(str(tmp_path / "wages.csv"), "logwage", "employed",
                                         names, ["age", "exper"], robust=True))
    ratio = np.abs(rep.se_robust / rep.se_classical - 1)
    z = np.abs(rep.beta - beta) / rep.se_robust
    record(10, [
        ("estimate round trip, K_first", rep.K_first, rep.K_first > 0),
        ("max |robust/classical - 1| < 0.10", fmt(ratio.max()), ratio.max() < 0.10),
        ("max |beta - truth| / robust s.e. < 4", fmt(z.max()), z.max() < 4),
    ])
