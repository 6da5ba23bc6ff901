"""Simulation designs with polynomial selection indices.

Selection follows ``D = 1[h(X) + U >= 0]`` with ``h`` a polynomial in the
covariates, and the latent outcome is ``beta_0 + X beta + scale * V`` with
``(V, U)`` bivariate standard normal with correlation ``error_corr``.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, UnknownTerm
from .numerics import RngStream, cholesky, norm_cdf, sample_mvn

_FACTOR = re.compile(r"^x(\d+)(?:\^(\d+))?$")
_BERNOULLI = re.compile(r"^bernoulli\(\s*([0-9.eE+-]+)\s*\)$")


@dataclass
class DgpSpec:
    """Fully parameterized simulation design.

    ``terms`` name the monomials of the selection index, e.g. ``"1"``,
    ``"x1^2"`` or ``"x1^3*x2"``; ``alpha`` holds their coefficients.
    ``beta`` starts with the outcome intercept.
    """

    beta: tuple
    alpha: tuple
    terms: tuple
    covariates: tuple = ("normal",)
    outcome_noise_scale: float = 2.0
    error_corr: float = 0.75
    n: int = 5000
    name: str = "custom"
    binary_treatment: int | None = None

    def __post_init__(self):
        self.beta = tuple(float(b) for b in self.beta)
        self.alpha = tuple(float(a) for a in self.alpha)
        self.terms = tuple(str(t) for t in self.terms)
        self.covariates = tuple(str(c).strip().lower() for c in self.covariates)
        if len(self.alpha) != len(self.terms):
            raise ConfigError(f"{len(self.alpha)} selection coefficients for "
                              f"{len(self.terms)} terms")
        if len(self.beta) != len(self.covariates) + 1:
            raise ConfigError(f"beta needs an intercept plus {len(self.covariates)} "
                              f"slopes, got {len(self.beta)} values")
        if not -1.0 < self.error_corr < 1.0:
            raise ConfigError(f"error_corr must lie in (-1, 1), got {self.error_corr}")
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        for c in self.covariates:
            _parse_covariate(c)
        for t in self.terms:
            parse_term(t, len(self.covariates))

    @property
    def d_x(self) -> int:
        return len(self.covariates)

    @property
    def slopes(self) -> np.ndarray:
        return np.asarray(self.beta[1:])

    @property
    def binary_cols(self) -> list:
        return [j for j, c in enumerate(self.covariates) if c != "normal"]

    @property
    def continuous_cols(self) -> list:
        return [j for j, c in enumerate(self.covariates) if c == "normal"]

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("beta", "alpha", "terms", "covariates"):
            d[key] = list(d[key])
        if d["binary_treatment"] is None:
            del d["binary_treatment"]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DgpSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown DGP fields: {sorted(extra)}")
        return cls(**d)


@dataclass
class SimDataset:
    X: np.ndarray
    D: np.ndarray
    Y: np.ndarray
    Y_star: np.ndarray
    p0: np.ndarray
    Zpoly: np.ndarray
    spec: DgpSpec = field(repr=False)


def _parse_covariate(c: str):
    if c == "normal":
        return ("normal", None)
    m = _BERNOULLI.match(c)
    if m:
        p = float(m.group(1))
        if 0.0 < p < 1.0:
            return ("bernoulli", p)
    raise ConfigError(f"unknown covariate distribution {c!r}; "
                      "use 'normal' or 'bernoulli(p)'")


def parse_term(term: str, d_x: int) -> list:
    """Parse a monomial into ``[(column, power), ...]``; ``"1"`` is the empty product."""
    t = term.replace(" ", "")
    if t == "1":
        return []
    factors = []
    for part in t.split("*"):
        m = _FACTOR.match(part)
        if not m:
            raise UnknownTerm(f"cannot parse selection term {term!r}")
        col = int(m.group(1)) - 1
        power = int(m.group(2) or 1)
        if not 0 <= col < d_x:
            raise UnknownTerm(f"term {term!r} references x{col + 1}, "
                              f"but only {d_x} covariates are declared")
        factors.append((col, power))
    return factors


def term_matrix(spec: DgpSpec, X) -> np.ndarray:
    """Evaluate every selection term at every row: the true selection design."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != spec.d_x:
        raise ValueError(f"X has {X.shape[1]} columns, spec declares {spec.d_x}")
    cols = []
    for t in spec.terms:
        col = np.ones(X.shape[0])
        for j, p in parse_term(t, spec.d_x):
            col = col * X[:, j] ** p
        cols.append(col)
    return np.column_stack(cols)


def selection_index(spec: DgpSpec, X) -> np.ndarray:
    return term_matrix(spec, X) @ np.asarray(spec.alpha)


def draw_sample(spec: DgpSpec, rng: RngStream, n: int | None = None) -> SimDataset:
    """Draw covariates column by column, then the error pair (V, U)."""
    n = spec.n if n is None else int(n)
    X = np.empty((n, spec.d_x))
    for j, c in enumerate(spec.covariates):
        kind, p = _parse_covariate(c)
        if kind == "normal":
            X[:, j] = rng.standard_normal(n)
        else:
            X[:, j] = (rng.random(n) < p).astype(np.float64)
    rho = spec.error_corr
    L = cholesky(np.array([[1.0, rho], [rho, 1.0]]))
    VU = sample_mvn(np.zeros(2), L, n, rng)
    Z = term_matrix(spec, X)
    h = Z @ np.asarray(spec.alpha)
    D = (h + VU[:, 1] >= 0).astype(np.float64)
    beta = np.asarray(spec.beta)
    y_star = beta[0] + X @ beta[1:] + spec.outcome_noise_scale * VU[:, 0]
    return SimDataset(X, D, np.where(D == 1, y_star, 0.0), y_star, norm_cdf(h), Z, spec)


# Outcome coefficients for the single-covariate designs are not published;
# estimator errors are invariant to them, so DGP1's (0.5, 0.5) is reused.
_BUILTINS = {
    "dgp0a": dict(beta=(0.5, 0.5), alpha=(0.6, 1.50, -0.5, -0.05),
                  terms=("1", "x1", "x1^2", "x1^3"), covariates=("normal",)),
    "dgp0b": dict(beta=(0.5, 0.5), alpha=(0.4, 1.50, 0.2, 0.05),
                  terms=("1", "x1", "x1^2", "x1^3"), covariates=("normal",)),
    "dgp1": dict(beta=(0.5, 0.5, 0.25), alpha=(1.5, 0.5, -0.5, 0.2, 0.5, 1.0, -0.5),
                 terms=("1", "x1", "x1^2", "x1^3", "x1*x2", "x2", "x2^2"),
                 covariates=("normal", "normal")),
    "dgp2": dict(beta=(0.5, 0.5, 0.25), alpha=(0.2, -0.2, -0.5, 0.3, 0.1, 0.5, -0.3, 0.2),
                 terms=("1", "x1", "x1^2", "x1^3", "x1*x2", "x2", "x1^2*x2", "x1^3*x2"),
                 covariates=("normal", "bernoulli(0.5)"), binary_treatment=1),
}

BUILTIN_NAMES = tuple(_BUILTINS)


def builtin_spec(name: str, n: int = 5000) -> DgpSpec:
    key = name.strip().lower()
    if key not in _BUILTINS:
        raise ConfigError(f"unknown design {name!r}; choose from {', '.join(_BUILTINS)}")
    return DgpSpec(name=key, n=n, outcome_noise_scale=2.0, error_corr=0.75, **_BUILTINS[key])
