"""Shared numerical kernels.

Normal distribution functions, rank-revealing least squares, Cholesky
factorization, correlated normal sampling and the reproducible random
streams used by the simulation code.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
from scipy import special

from .errors import EmptyProblem, NotPositiveDefinite

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)

RngStream = np.random.Generator


def norm_cdf(z):
    """Standard normal CDF, accurate to full double precision in both tails."""
    return special.ndtr(z)


def norm_pdf(z):
    """Standard normal density."""
    z = np.asarray(z, dtype=np.float64)
    out = np.exp(-0.5 * z * z - _LOG_SQRT_2PI)
    return out if out.ndim else float(out)


def log_norm_cdf(z):
    return special.log_ndtr(z)


def inverse_mills(v):
    """Inverse Mills ratio phi(v) / Phi(v).

    Evaluated as exp(log phi(v) - log Phi(v)); ``log_ndtr`` switches to an
    asymptotic series in the lower tail, so the ratio stays finite and
    accurate far below v = -8 where the direct quotient underflows.
    """
    v = np.asarray(v, dtype=np.float64)
    out = np.exp(-0.5 * v * v - _LOG_SQRT_2PI - special.log_ndtr(v))
    return out if out.ndim else float(out)


def chi2_sf(x, df):
    """Survival function of the chi-square distribution with ``df`` degrees of freedom."""
    return special.chdtrc(df, x)


class LstsqResult(NamedTuple):
    coef: np.ndarray
    rank: int
    dropped: tuple


def solve_ls(A, b) -> LstsqResult:
    """Least squares via column-pivoted QR with column dropping.

    Columns whose pivot ``|R[k, k]|`` falls below
    ``max(rows, cols) * eps * |R[0, 0]|`` are removed from the fit; their
    coefficients are reported as zero and their indices listed in
    ``dropped``.  ``b`` may be a vector or a matrix of right-hand sides.

    Returns
    -------
    LstsqResult
        ``(coef, rank, dropped)``.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] == 0 or A.shape[1] == 0:
        raise EmptyProblem(f"least squares problem has shape {A.shape}")
    if b.shape[0] != A.shape[0]:
        raise ValueError(f"b has {b.shape[0]} rows, A has {A.shape[0]}")
    m, n = A.shape
    Q, R, piv = sla.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        rank = 0
    else:
        tol = max(m, n) * np.finfo(np.float64).eps * diag[0]
        rank = int(np.sum(diag > tol))
    coef = np.zeros((n,) + b.shape[1:])
    if rank > 0:
        qtb = Q[:, :rank].T @ b
        coef[piv[:rank]] = sla.solve_triangular(R[:rank, :rank], qtb)
    dropped = tuple(sorted(int(j) for j in piv[rank:]))
    return LstsqResult(coef, rank, dropped)


def cholesky(S) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive-definite matrix."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    if np.max(np.abs(S - S.T), initial=0.0) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if np.any(np.diag(L) <= 0.0):
        raise NotPositiveDefinite("non-positive pivot")
    return L


def sample_mvn(mean, factor, n: int, rng: RngStream) -> np.ndarray:
    """Draw ``n`` rows ``mean + L z`` with ``z`` standard normal."""
    mean = np.asarray(mean, dtype=np.float64)
    L = np.asarray(factor, dtype=np.float64)
    if L.shape != (mean.size, mean.size):
        raise ValueError("factor dimension does not match mean")
    z = rng.standard_normal((n, mean.size))
    return mean + z @ L.T


def stream(seed: int, index: int = 0) -> RngStream:
    """Independent random stream number ``index`` under ``seed``.

    Streams are Philox (counter-based) generators keyed through
    ``SeedSequence(seed, spawn_key=(index,))``, so stream ``r`` does not
    depend on how many other streams were created or in what order.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))
