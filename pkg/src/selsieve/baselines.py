"""Comparison estimators.

Two-part OLS on the selected sample, Heckman's two-step and maximum
likelihood estimators with a linear probit selection index, the oracle
inverse-Mills estimator that knows the true selection design, and Lee's
trimming bounds for a binary treatment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import DegenerateSelection, EmptyArm, TooFewSelected
from .first_stage import fit_sieve_binary, linear_index_design
from .numerics import inverse_mills, log_norm_cdf, solve_ls

__all__ = [
    "BaselineFit", "Bounds", "tpm_ols", "inverse_mills", "heckman_two_step",
    "heckman_mle", "heckman_loglik", "oracle_estimate", "lee_bounds",
]


@dataclass
class BaselineFit:
    method: str
    beta: np.ndarray
    se: np.ndarray
    converged: bool = True
    auxiliary: dict = field(default_factory=dict)

    @property
    def slopes(self) -> np.ndarray:
        return self.beta[1:]


@dataclass(frozen=True)
class Bounds:
    lower: float
    upper: float
    trim_proportion: float

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _prep(Y, X, D):
    Y = np.asarray(Y, dtype=np.float64).ravel()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    D = np.asarray(D).ravel().astype(bool)
    return Y, X, D


def _ols(y, A):
    res = solve_ls(A, y)
    resid = y - A @ res.coef
    dof = A.shape[0] - res.rank
    sigma2 = float(resid @ resid) / dof if dof > 0 else np.nan
    keep = np.setdiff1d(np.arange(A.shape[1]), res.dropped)
    se = np.full(A.shape[1], np.nan)
    Ak = A[:, keep]
    se[keep] = np.sqrt(sigma2 * np.diag(np.linalg.inv(Ak.T @ Ak)))
    return res.coef, se, resid


def tpm_ols(Y, X, D) -> BaselineFit:
    """OLS of Y on (1, X) over the selected rows, classical standard errors."""
    Y, X, D = _prep(Y, X, D)
    k = X.shape[1] + 1
    if D.sum() <= k:
        raise TooFewSelected(f"{int(D.sum())} selected observations for {k} coefficients")
    A = np.column_stack([np.ones(int(D.sum())), X[D]])
    coef, se, resid = _ols(Y[D], A)
    return BaselineFit("tpm", coef, se, True, {"sigma": float(np.sqrt(np.mean(resid ** 2)))})


def _no_selection(method: str, Y, X, D) -> BaselineFit:
    # with D == 1 everywhere the selection correction vanishes
    fit = tpm_ols(Y, X, D)
    fit.method = method
    fit.auxiliary.update(no_selection=True, rho=0.0)
    return fit


def _mills_regression(method, Y, X, D, Z):
    probit = fit_sieve_binary(D, Z)
    index = Z @ probit.gamma
    mills = inverse_mills(index)
    n1 = int(D.sum())
    A = np.column_stack([np.ones(n1), X[D], mills[D]])
    if n1 <= A.shape[1]:
        raise TooFewSelected(f"{n1} selected observations for {A.shape[1]} coefficients")
    coef, se, resid = _ols(Y[D], A)
    aux = {"mills_coef": float(coef[-1]), "mills_se": float(se[-1]),
           "gamma": probit.gamma, "probit_converged": probit.converged}
    return BaselineFit(method, coef[:-1], se[:-1], True, aux), probit, resid, index, mills


def heckman_two_step(Y, X, D, Z=None) -> BaselineFit:
    """Probit of D on Z, then OLS of Y on (1, X, inverse Mills ratio) over D=1.

    Standard errors are the uncorrected second-step OLS ones.  ``Z``
    defaults to ``(1, X)``, i.e. no exclusion restriction.
    """
    Y, X, D = _prep(Y, X, D)
    if D.all():
        return _no_selection("hs2step", Y, X, D)
    Z = linear_index_design(X) if Z is None else np.asarray(Z, dtype=np.float64)
    fit, _, resid, index, mills = _mills_regression("hs2step", Y, X, D, Z)
    bl = fit.auxiliary["mills_coef"]
    delta = mills[D] * (mills[D] + index[D])
    sigma2 = float(np.mean(resid ** 2)) + bl * bl * float(np.mean(delta))
    sigma = float(np.sqrt(max(sigma2, 1e-12)))
    fit.auxiliary.update(sigma=sigma, rho=float(np.clip(bl / sigma, -0.99, 0.99)))
    return fit


def oracle_estimate(Y, X, D, Zpoly) -> BaselineFit:
    """Inverse-Mills correction computed from a probit on the true selection design."""
    Y, X, D = _prep(Y, X, D)
    if D.all():
        return _no_selection("oracle", Y, X, D)
    fit, *_ = _mills_regression("oracle", Y, X, D, np.asarray(Zpoly, dtype=np.float64))
    return fit


def _unpack(theta, k, m):
    beta = theta[:k]
    gamma = theta[k:k + m]
    rho = np.tanh(theta[k + m])
    sigma = np.exp(theta[k + m + 1])
    return beta, gamma, rho, sigma


def heckman_loglik(theta, y1, A1, Z, D, *, grad: bool = False):
    """Log-likelihood of the bivariate-normal selection model.

    ``theta = (beta, gamma, atanh(rho), log(sigma))``; ``A1`` and ``y1`` are
    the outcome design and outcome over the selected rows, ``Z`` the
    selection design over all rows.
    """
    k, m = A1.shape[1], Z.shape[1]
    beta, gamma, rho, sigma = _unpack(theta, k, m)
    zg = Z @ gamma
    zg0, zg1 = zg[~D], zg[D]
    e = (y1 - A1 @ beta) / sigma
    c = 1.0 / np.sqrt(1.0 - rho * rho)
    w = (zg1 + rho * e) * c
    ll = (np.sum(log_norm_cdf(-zg0))
          + np.sum(-0.5 * e * e - 0.5 * np.log(2 * np.pi) - np.log(sigma) + log_norm_cdf(w)))
    if not grad:
        return ll
    lam0 = inverse_mills(-zg0)
    lam1 = inverse_mills(w)
    g_beta = A1.T @ (e / sigma - lam1 * rho * c / sigma)
    g_gamma = Z[D].T @ (lam1 * c) - Z[~D].T @ lam0
    g_a = np.sum(lam1 * (e + rho * zg1) * c)
    g_s = np.sum(e * e - 1.0 - lam1 * rho * e * c)
    return ll, np.concatenate([g_beta, g_gamma, [g_a, g_s]])


def _num_hessian(fun_grad, theta, h=1e-5):
    p = theta.size
    H = np.empty((p, p))
    for j in range(p):
        step = np.zeros(p)
        step[j] = h * max(1.0, abs(theta[j]))
        H[:, j] = (fun_grad(theta + step) - fun_grad(theta - step)) / (2 * step[j])
    return 0.5 * (H + H.T)


def heckman_mle(Y, X, D, Z=None, *, compute_se: bool = True, max_iter: int = 500,
                gtol: float = 1e-6) -> BaselineFit:
    """Full-information maximum likelihood for the Heckman selection model.

    Starts at the two-step estimates and runs BFGS on the average
    log-likelihood with rho and sigma mapped through atanh and log.
    """
    Y, X, D = _prep(Y, X, D)
    if D.all():
        return _no_selection("hsmle", Y, X, D)
    Z = linear_index_design(X) if Z is None else np.asarray(Z, dtype=np.float64)
    start = heckman_two_step(Y, X, D, Z)
    n = Y.size
    y1 = Y[D]
    A1 = np.column_stack([np.ones(int(D.sum())), X[D]])
    k = A1.shape[1]
    theta0 = np.concatenate([start.beta, start.auxiliary["gamma"],
                             [np.arctanh(start.auxiliary["rho"]), np.log(start.auxiliary["sigma"])]])

    def objective(theta):
        ll, g = heckman_loglik(theta, y1, A1, Z, D, grad=True)
        if not np.isfinite(ll):
            return np.inf, np.zeros_like(theta)
        return -ll / n, -g / n

    ll0 = heckman_loglik(theta0, y1, A1, Z, D)
    res = optimize.minimize(objective, theta0, jac=True, method="BFGS",
                            options={"gtol": gtol, "maxiter": max_iter})
    theta = res.x
    ll = -res.fun * n
    if not np.isfinite(ll) or ll < ll0:
        theta, ll = theta0, ll0
    grad_max = float(np.max(np.abs(objective(theta)[1])))
    converged = bool(res.nit < max_iter and (res.success or grad_max <= 1e3 * gtol))

    beta, gamma, rho, sigma = _unpack(theta, k, Z.shape[1])
    se = np.full(k, np.nan)
    aux = {"rho": float(rho), "sigma": float(sigma), "gamma": gamma, "loglik": float(ll),
           "loglik_start": float(ll0), "iterations": int(res.nit), "grad_max": grad_max}
    if compute_se:
        H = _num_hessian(lambda t: heckman_loglik(t, y1, A1, Z, D, grad=True)[1], theta)
        try:
            cov = np.linalg.inv(-H)
            se = np.sqrt(np.clip(np.diag(cov)[:k], 0.0, None))
            aux["rho_se"] = float(np.sqrt(max(cov[-2, -2], 0.0)) * (1 - rho * rho))
        except np.linalg.LinAlgError:
            pass
    return BaselineFit("hsmle", beta, se, converged, aux)


def _trimmed_mean(sorted_y: np.ndarray, keep: float, upper: bool) -> float:
    """Mean of the lowest (or highest) ``keep`` fraction, splitting the boundary unit."""
    y = sorted_y[::-1] if upper else sorted_y
    mass = keep * y.size
    whole = int(np.floor(mass + 1e-12))
    whole = min(whole, y.size)
    frac = mass - whole
    total = float(np.sum(y[:whole]))
    if frac > 1e-12 and whole < y.size:
        total += frac * float(y[whole])
    return total / mass


def lee_bounds(Y, S, T) -> Bounds:
    """Lee trimming bounds on E[Y | T=1] - E[Y | T=0] for always-selected units.

    The arm with the higher selection rate has the fraction
    ``q = (p_high - p_low) / p_high`` of its selected outcomes trimmed from
    the top (lower bound) or bottom (upper bound).
    """
    Y = np.asarray(Y, dtype=np.float64).ravel()
    S = np.asarray(S).ravel().astype(bool)
    T = np.asarray(T).ravel()
    if not np.all((T == 0) | (T == 1)):
        raise ValueError("treatment must be 0/1")
    T = T.astype(bool)
    if T.all() or not T.any():
        raise EmptyArm("one treatment arm has no observations")
    p1, p0 = S[T].mean(), S[~T].mean()
    high_is_treated = p1 >= p0
    p_high, p_low = (p1, p0) if high_is_treated else (p0, p1)
    if p_high == 0:
        raise DegenerateSelection("no selected observations in either arm")
    if p_low == 0:
        raise EmptyArm("the low-selection arm has no selected outcomes")
    q = float((p_high - p_low) / p_high)
    y_high = np.sort(Y[S & (T if high_is_treated else ~T)])
    low_mean = float(np.mean(Y[S & (~T if high_is_treated else T)]))
    trim_lo = _trimmed_mean(y_high, 1.0 - q, upper=False)
    trim_hi = _trimmed_mean(y_high, 1.0 - q, upper=True)
    if high_is_treated:
        return Bounds(trim_lo - low_mean, trim_hi - low_mean, q)
    return Bounds(low_mean - trim_hi, low_mean - trim_lo, q)
