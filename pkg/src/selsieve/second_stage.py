"""Second stage: partial-linear sieve least squares on the selected sample.

On the D=1 rows, Y is regressed jointly on X and a B-spline basis of the
first-stage selection probability.  By Frisch-Waugh this reproduces the
projection form of the estimator, where X and Y are both residualized on
the spline span, without forming any n x n projection matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSpec, KnotVector, design_matrix, place_knots
from .errors import CollinearWithLambda, TooFewSelected
from .numerics import solve_ls

IDENTIFICATION_HINT = (
    "a covariate is (numerically) a function of the estimated selection "
    "probability, so its coefficient cannot be separated from the selection "
    "correction; this happens when the selection probability is monotone in "
    "a lone continuous covariate or linear in the covariates")

DEFAULT_LAMBDA_SPEC = BasisSpec(n_interior_knots=7)


@dataclass
class SlsFit:
    beta: np.ndarray
    lambda_coef: np.ndarray
    residuals: np.ndarray
    xtilde: np.ndarray
    n_selected: int
    K2: int
    rank_lambda: int
    knots: KnotVector | None
    cov_classical: np.ndarray | None = None
    cov_robust: np.ndarray | None = None

    @property
    def se_classical(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov_classical))

    @property
    def se_robust(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov_robust))


def lambda_design(p_sel, lambda_spec: BasisSpec = DEFAULT_LAMBDA_SPEC, knots=None):
    """Spline basis of the selection probability for the selected rows.

    A constant selection probability leaves only the intercept.
    """
    p_sel = np.asarray(p_sel, dtype=np.float64)
    if knots is None:
        if p_sel.max() <= p_sel.min():
            return np.ones((p_sel.size, 1)), None
        knots = place_knots(p_sel, lambda_spec)
    return design_matrix(p_sel, knots), knots


def sls_estimate(Y, X, D, p_hat, lambda_spec: BasisSpec = DEFAULT_LAMBDA_SPEC,
                 knots: KnotVector | None = None) -> SlsFit:
    """Sieve least squares estimate of the slope coefficients.

    ``X`` must not contain an intercept; the level is absorbed by the
    spline in the selection probability.  Knots are placed on the selected
    ``p_hat`` unless given.  Both covariance matrices are filled in.
    """
    Y = np.asarray(Y, dtype=np.float64).ravel()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    D = np.asarray(D).ravel().astype(bool)
    p_hat = np.asarray(p_hat, dtype=np.float64).ravel()
    n = Y.size
    if not (X.shape[0] == D.size == p_hat.size == n):
        raise ValueError("Y, X, D and p_hat must have the same length")
    d_x = X.shape[1]
    K2 = lambda_spec.K if knots is None else knots.K
    n_sel = int(D.sum())
    if n_sel <= d_x + K2:
        raise TooFewSelected(f"{n_sel} selected observations for {d_x} covariates "
                             f"and {K2} basis functions")

    ys, xs = Y[D], X[D]
    R, knots = lambda_design(p_hat[D], lambda_spec, knots)
    proj = solve_ls(R, np.column_stack([ys, xs]))
    r_rank = proj.rank
    joint = solve_ls(np.column_stack([xs, R]), ys)
    if joint.rank < r_rank + d_x:
        raise CollinearWithLambda(IDENTIFICATION_HINT)

    beta = joint.coef[:d_x]
    lam = joint.coef[d_x:]
    resid = ys - xs @ beta - R @ lam
    xtilde = xs - R @ proj.coef[:, 1:]
    fit = SlsFit(beta, lam, resid, xtilde, n_sel, R.shape[1], r_rank, knots)
    fit.cov_classical = covariance_classical(fit)
    fit.cov_robust = covariance_robust(fit)
    return fit


def _bread(fit: SlsFit) -> np.ndarray:
    return np.linalg.inv(fit.xtilde.T @ fit.xtilde)


def covariance_classical(fit: SlsFit) -> np.ndarray:
    """Homoskedastic covariance with a residual degrees-of-freedom correction."""
    dof = fit.n_selected - fit.xtilde.shape[1] - fit.rank_lambda
    sigma2 = float(fit.residuals @ fit.residuals) / dof
    return sigma2 * _bread(fit)


def covariance_robust(fit: SlsFit) -> np.ndarray:
    """HC0 sandwich on the residualized regressors."""
    A_inv = _bread(fit)
    xe = fit.xtilde * fit.residuals[:, None]
    cov = A_inv @ (xe.T @ xe) @ A_inv
    return 0.5 * (cov + cov.T)
