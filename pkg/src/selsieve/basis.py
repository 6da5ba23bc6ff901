"""Piecewise-polynomial sieve bases.

B-splines are evaluated with the Cox-de Boor recursion on a clamped knot
sequence.  A plain power-polynomial family is kept for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSupport

FAMILIES = ("bspline", "power")
PLACEMENTS = ("quantile", "uniform")


@dataclass(frozen=True)
class BasisSpec:
    family: str = "bspline"
    degree: int = 3
    n_interior_knots: int = 5
    placement: str = "quantile"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown basis family {self.family!r}")
        if self.placement not in PLACEMENTS:
            raise ValueError(f"unknown knot placement {self.placement!r}")
        if self.degree < 0 or self.n_interior_knots < 0:
            raise ValueError("degree and knot count must be nonnegative")

    @property
    def K(self) -> int:
        if self.family == "power":
            return self.degree + 1
        return self.n_interior_knots + self.degree + 1


@dataclass(frozen=True)
class KnotVector:
    boundary_lo: float
    boundary_hi: float
    interior: tuple = field(default_factory=tuple)
    degree: int = 3
    family: str = "bspline"

    def __post_init__(self):
        if not self.boundary_lo < self.boundary_hi:
            raise DegenerateSupport(
                f"boundaries [{self.boundary_lo}, {self.boundary_hi}] are empty")
        inner = np.asarray(self.interior, dtype=np.float64)
        if inner.size and (np.any(np.diff(inner) < 0)
                           or inner[0] <= self.boundary_lo
                           or inner[-1] >= self.boundary_hi):
            raise ValueError("interior knots must be sorted and strictly inside the boundaries")

    @property
    def K(self) -> int:
        if self.family == "power":
            return self.degree + 1
        return len(self.interior) + self.degree + 1

    def full(self) -> np.ndarray:
        """Clamped knot sequence with boundary multiplicity degree + 1."""
        d = self.degree + 1
        return np.concatenate([np.full(d, self.boundary_lo),
                               np.asarray(self.interior, dtype=np.float64),
                               np.full(d, self.boundary_hi)])


def place_knots(values, spec: BasisSpec) -> KnotVector:
    """Interior knots at empirical quantiles j/(m+1), or evenly spaced on [min, max].

    The boundaries are the sample extremes widened by ``1e-9 * range``.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise DegenerateSupport("cannot place knots on an empty sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("knot placement values must be finite")
    lo, hi = float(x.min()), float(x.max())
    if hi <= lo:
        raise DegenerateSupport(f"all values equal {lo}; no support to place knots on")
    m = spec.n_interior_knots if spec.family == "bspline" else 0
    probs = np.arange(1, m + 1) / (m + 1)
    if spec.placement == "quantile":
        interior = np.quantile(x, probs)
    else:
        interior = lo + probs * (hi - lo)
    pad = 1e-9 * (hi - lo)
    return KnotVector(lo - pad, hi + pad, tuple(float(v) for v in interior),
                      spec.degree, spec.family)


def _bspline_matrix(x: np.ndarray, knots: KnotVector) -> np.ndarray:
    t = knots.full()
    deg = knots.degree
    n_span = t.size - 1
    # degree-0 indicators on [t_j, t_{j+1}); the top boundary joins the last nonempty span
    B = ((t[:-1] <= x[:, None]) & (x[:, None] < t[1:])).astype(np.float64)
    last = int(np.nonzero(t[:-1] < t[1:])[0][-1])
    B[x >= t[last + 1], last] = 1.0
    for k in range(1, deg + 1):
        m = n_span - k
        left_den = t[k:k + m] - t[:m]
        right_den = t[k + 1:k + 1 + m] - t[1:1 + m]
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(left_den > 0, (x[:, None] - t[:m]) / left_den, 0.0)
            right = np.where(right_den > 0, (t[k + 1:k + 1 + m] - x[:, None]) / right_den, 0.0)
        B = left * B[:, :m] + right * B[:, 1:m + 1]
    return B


def design_matrix(values, knots: KnotVector) -> np.ndarray:
    """Evaluate the basis at every value; returns an ``n x K`` matrix.

    Values outside the knot boundaries are clamped to the nearest boundary.
    """
    x = np.clip(np.asarray(values, dtype=np.float64).ravel(),
                knots.boundary_lo, knots.boundary_hi)
    if knots.family == "power":
        mid = 0.5 * (knots.boundary_lo + knots.boundary_hi)
        half = 0.5 * (knots.boundary_hi - knots.boundary_lo)
        u = (x - mid) / half
        return u[:, None] ** np.arange(knots.degree + 1)
    return _bspline_matrix(x, knots)


def eval_basis(x: float, knots: KnotVector) -> np.ndarray:
    return design_matrix(np.array([x]), knots)[0]
