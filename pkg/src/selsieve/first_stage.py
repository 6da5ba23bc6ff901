"""First stage: sieve probit for the selection probability.

The selection probability P[D=1 | X] is estimated by a probit whose index is
a B-spline expansion of the continuous covariates (plus dummies and
dummy-by-spline interactions), fitted by Newton-Raphson with step halving
on the full sample.  The module also carries the likelihood-ratio test of a
linear probit index against the sieve index.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .basis import BasisSpec, design_matrix, place_knots
from .errors import NotNested, OneClassOnly
from .numerics import chi2_sf, inverse_mills, log_norm_cdf, norm_cdf

log = logging.getLogger(__name__)

P_CLAMP = 1e-6
GRAD_TOL = 1e-8
REL_LL_TOL = 1e-12
MAX_ITER = 100
SEPARATION_INDEX = 30.0


@dataclass
class SieveExpansion:
    """Recipe that turns raw covariates into the first-stage design.

    ``continuous_terms`` maps a column index of X to its knot vector.  All
    remaining columns are treated as 0/1 dummies.
    """

    continuous_terms: dict
    dummy_cols: tuple = ()
    interaction_dummies: tuple = ()
    include_linear_dummies: bool = True
    continuous_products: tuple = ()
    column_names: list = field(default_factory=list)

    @property
    def n_columns(self) -> int:
        return len(self.column_names)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        cols = [np.ones(X.shape[0])]
        bases = {}
        for j, knots in self.continuous_terms.items():
            # the first spline column is absorbed by the intercept
            bases[j] = design_matrix(X[:, j], knots)[:, 1:]
            cols.extend(bases[j].T)
        for j, k in self.continuous_products:
            cols.append(X[:, j] * X[:, k])
        if self.include_linear_dummies:
            cols.extend(X[:, j] for j in self.dummy_cols)
        for d in self.interaction_dummies:
            for j in self.continuous_terms:
                cols.extend((X[:, d][:, None] * bases[j]).T)
        return np.column_stack(cols)


def expand(X, continuous_cols, spec: BasisSpec = BasisSpec(), *,
           interact: bool = True, include_linear_dummies: bool = True,
           continuous_products: bool = True, names=None):
    """Build the sieve design for the selection equation.

    Columns are: intercept, spline basis of each continuous covariate (one
    column dropped per covariate), optional pairwise products of the
    continuous covariates, the raw dummy columns, and every dummy times
    every retained spline column.

    Returns
    -------
    (ndarray, SieveExpansion)
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    continuous_cols = [int(j) for j in continuous_cols]
    if not continuous_cols:
        raise ValueError("the sieve needs at least one continuous covariate")
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(X.shape[1])]
    dummies = tuple(j for j in range(X.shape[1]) if j not in continuous_cols)
    terms = {j: place_knots(X[:, j], spec) for j in continuous_cols}
    products = ()
    if continuous_products:
        products = tuple((a, b) for i, a in enumerate(continuous_cols)
                         for b in continuous_cols[i + 1:])

    col_names = ["const"]
    for j, knots in terms.items():
        col_names += [f"s({names[j]})_{k}" for k in range(1, knots.K)]
    col_names += [f"{names[a]}*{names[b]}" for a, b in products]
    if include_linear_dummies:
        col_names += [names[j] for j in dummies]
    inter = dummies if interact else ()
    for d in inter:
        for j, knots in terms.items():
            col_names += [f"{names[d]}:s({names[j]})_{k}" for k in range(1, knots.K)]

    expansion = SieveExpansion(terms, dummies, inter, include_linear_dummies,
                               products, col_names)
    return expansion.transform(X), expansion


@dataclass
class FirstStageFit:
    gamma: np.ndarray
    p_hat: np.ndarray
    loglik: float
    K_fs: int
    iterations: int
    converged: bool
    separation: bool = False
    loglik_path: list = field(default_factory=list)


def probit_loglik(gamma, D, X) -> float:
    q = 2.0 * np.asarray(D, dtype=np.float64) - 1.0
    return float(np.sum(log_norm_cdf(q * (X @ gamma))))


def probit_score(gamma, D, X) -> np.ndarray:
    q = 2.0 * np.asarray(D, dtype=np.float64) - 1.0
    return X.T @ (q * inverse_mills(q * (X @ gamma)))


def _newton_direction(X, w, g):
    H = (X * w[:, None]).T @ X
    try:
        return sla.cho_solve(sla.cho_factor(H, check_finite=False), g, check_finite=False)
    except (np.linalg.LinAlgError, sla.LinAlgError):
        return np.linalg.lstsq(H, g, rcond=None)[0]


def fit_sieve_binary(D, Xexp, *, max_iter: int = MAX_ITER) -> FirstStageFit:
    """Probit maximum likelihood by Newton-Raphson with step halving.

    Stops when the largest score component is at most 1e-8 or the relative
    log-likelihood change is at most 1e-12.  A fit whose final index exceeds
    30 in absolute value for some observation is flagged as separated and
    reported with ``converged=False``.
    """
    D = np.asarray(D, dtype=np.float64).ravel()
    X = np.asarray(Xexp, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if not np.all((D == 0) | (D == 1)):
        raise ValueError("D must be 0/1")
    if D.min() == D.max():
        raise OneClassOnly(f"selection indicator is constant ({int(D[0])}); "
                           "the selection probability is not estimable")
    n, k = X.shape
    if n <= k:
        raise ValueError(f"{n} observations for {k} first-stage columns")

    q = 2.0 * D - 1.0
    gamma = np.zeros(k)
    eta = np.zeros(n)
    ll = float(np.sum(log_norm_cdf(q * eta)))
    path = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        z = q * eta
        lam = inverse_mills(z)
        g = X.T @ (q * lam)
        if np.max(np.abs(g)) <= GRAD_TOL:
            converged = True
            it -= 1
            break
        w = lam * (z + lam)
        step = _newton_direction(X, w, g)
        t = 1.0
        while True:
            cand = gamma + t * step
            eta_c = X @ cand
            ll_c = float(np.sum(log_norm_cdf(q * eta_c)))
            if ll_c >= ll or t < 1e-10:
                break
            t *= 0.5
        if ll_c < ll:
            # no ascent possible along the Newton direction; we are at the optimum numerically
            converged = True
            break
        change = abs(ll_c - ll) / max(abs(ll), 1e-300)
        gamma, eta, ll = cand, eta_c, ll_c
        path.append(ll)
        if change <= REL_LL_TOL:
            converged = True
            break

    separation = bool(np.max(np.abs(eta)) > SEPARATION_INDEX)
    if separation:
        log.debug("first stage: |index| > %g at termination (quasi-separation)", SEPARATION_INDEX)
    p_hat = np.clip(norm_cdf(eta), P_CLAMP, 1.0 - P_CLAMP)
    return FirstStageFit(gamma, p_hat, ll, k, it, converged and not separation,
                         separation, path)


def linear_index_design(X) -> np.ndarray:
    """Intercept plus raw covariates: the linear probit index."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return np.column_stack([np.ones(X.shape[0]), X])


@dataclass(frozen=True)
class LrTest:
    statistic: float
    df: int
    p_value: float
    loglik_sieve: float = float("nan")
    loglik_linear: float = float("nan")

    def reject(self, alpha: float = 0.05) -> bool:
        return self.p_value < alpha


def lr_nonlinearity_test(loglik_sieve: float, K_sieve: int, loglik_linear: float,
                         d_X: int) -> LrTest:
    """Likelihood-ratio test of a linear probit index nested in the sieve.

    ``K_sieve`` and ``d_X`` are the parameter counts of the two models.
    """
    if K_sieve <= d_X:
        raise NotNested(f"sieve has {K_sieve} parameters, linear model {d_X}")
    stat = max(0.0, 2.0 * (loglik_sieve - loglik_linear))
    df = int(K_sieve - d_X)
    return LrTest(stat, df, float(chi2_sf(stat, df)), loglik_sieve, loglik_linear)


def diagnose(D, X, continuous_cols, spec: BasisSpec = BasisSpec(), **expand_kw) -> LrTest:
    """Fit the sieve and linear-index probits on the same data and compare them."""
    Xexp, _ = expand(X, continuous_cols, spec, **expand_kw)
    sieve = fit_sieve_binary(D, Xexp)
    Xlin = linear_index_design(X)
    lin = fit_sieve_binary(D, Xlin)
    return lr_nonlinearity_test(sieve.loglik, Xexp.shape[1], lin.loglik, Xlin.shape[1])
