from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from selsieve.baselines import (heckman_loglik, heckman_mle, heckman_two_step, lee_bounds,
                                oracle_estimate, tpm_ols)
from selsieve.dgp import DgpSpec, builtin_spec, draw_sample
from selsieve.errors import DegenerateSelection, EmptyArm
from selsieve.first_stage import linear_index_design
from selsieve.numerics import stream

LINEAR = DgpSpec(beta=(0.5, 0.5), alpha=(0.3, 0.8), terms=("1", "x1"),
                 covariates=("normal",), name="linear")
INDEPENDENT = DgpSpec(beta=(0.5, 0.5), alpha=(0.3, 0.8), terms=("1", "x1"),
                      error_corr=0.0, name="independent")


def hand_dataset():
    # arm A (T=1): 8 units, selected outcomes 1..5; arm B (T=0): 8 units, outcomes 2, 3
    Y = np.r_[1, 2, 3, 4, 5, 0, 0, 0, 2, 3, 0, 0, 0, 0, 0, 0].astype(float)
    S = np.r_[np.ones(5), np.zeros(3), np.ones(2), np.zeros(6)]
    T = np.r_[np.ones(8), np.zeros(8)]
    return Y, S, T


class TestLeeBounds:
    def test_hand_example(self):
        b = lee_bounds(*hand_dataset())
        assert b.trim_proportion == pytest.approx(0.6, abs=1e-15)
        assert b.lower == -1.0
        assert b.upper == 2.0

    def test_arm_labels_swap_sign(self):
        Y, S, T = hand_dataset()
        b = lee_bounds(Y, S, 1 - T)
        assert (b.lower, b.upper) == (-2.0, 1.0)

    def test_equal_rates_collapse(self):
        Y = np.r_[1.0, 3.0, 0, 2.0, 6.0, 0]
        S = np.r_[1, 1, 0, 1, 1, 0]
        T = np.r_[1, 1, 1, 0, 0, 0]
        b = lee_bounds(Y, S, T)
        assert b.trim_proportion == 0.0
        assert b.lower == b.upper == pytest.approx(2.0 - 4.0)

    def test_partial_unit_trimming(self):
        # 3 of 4 treated selected, 2 of 4 controls: keep 2/3 of 3 units = 2 units exactly
        Y = np.r_[1.0, 2.0, 9.0, 0, 4.0, 4.0, 0, 0]
        S = np.r_[1, 1, 1, 0, 1, 1, 0, 0]
        T = np.r_[1, 1, 1, 1, 0, 0, 0, 0]
        b = lee_bounds(Y, S, T)
        assert_allclose([b.lower, b.upper], [1.5 - 4.0, 5.5 - 4.0])

    def test_width_grows_with_trimming(self):
        rng = np.random.default_rng(0)
        n = 4000
        T = (rng.random(n) < 0.5).astype(float)
        Y = rng.standard_normal(n) + T
        u = rng.random(n)
        widths = []
        for gap in (0.0, 0.1, 0.2, 0.3):
            S = np.where(T == 1, u < 0.8, u < 0.8 - gap).astype(float)
            widths.append(lee_bounds(Y * S, S, T).width)
        assert np.all(np.diff(widths) > 0)

    def test_errors(self):
        with pytest.raises(EmptyArm):
            lee_bounds(np.ones(4), np.ones(4), np.ones(4))
        with pytest.raises(DegenerateSelection):
            lee_bounds(np.zeros(4), np.zeros(4), np.r_[1, 1, 0, 0])
        with pytest.raises(EmptyArm):
            lee_bounds(np.ones(4), np.r_[1, 1, 0, 0], np.r_[1, 1, 0, 0])


class TestHeckman:
    def test_gradient_matches_finite_difference(self):
        s = draw_sample(LINEAR, stream(1, 0), n=500)
        D = s.D.astype(bool)
        Z = linear_index_design(s.X)
        A1 = np.column_stack([np.ones(D.sum()), s.X[D]])
        theta = np.array([0.4, 0.6, 0.2, 0.7, 0.3, np.log(1.8)])
        _, g = heckman_loglik(theta, s.Y[D], A1, Z, D, grad=True)
        fd = np.empty_like(g)
        h = 1e-6
        for j in range(theta.size):
            e = np.zeros_like(theta)
            e[j] = h
            fd[j] = (heckman_loglik(theta + e, s.Y[D], A1, Z, D)
                     - heckman_loglik(theta - e, s.Y[D], A1, Z, D)) / (2 * h)
        assert_allclose(g, fd, rtol=1e-5, atol=1e-6)

    def test_mle_improves_on_start(self):
        s = draw_sample(LINEAR, stream(2, 0), n=3000)
        fit = heckman_mle(s.Y, s.X, s.D)
        assert fit.converged
        assert fit.auxiliary["loglik"] >= fit.auxiliary["loglik_start"]
        assert np.all(np.isfinite(fit.se))
        # correctly specified: near the truth, rho near 0.75, sigma near 2
        assert abs(fit.slopes[0] - 0.5) < 4 * fit.se[1]
        assert abs(fit.auxiliary["rho"] - 0.75) < 0.15
        assert abs(fit.auxiliary["sigma"] - 2.0) < 0.2

    def test_no_selection_on_unobservables(self):
        s = draw_sample(INDEPENDENT, stream(3, 0), n=20_000)
        tpm = tpm_ols(s.Y, s.X, s.D)
        hs = heckman_two_step(s.Y, s.X, s.D)
        mle = heckman_mle(s.Y, s.X, s.D)
        assert abs(tpm.slopes[0] - 0.5) < 4 * tpm.se[1]
        # without an exclusion restriction the correction is weakly identified,
        # so closeness is judged in standard-error units
        assert abs(hs.auxiliary["mills_coef"]) < 4 * hs.auxiliary["mills_se"]
        assert abs(mle.auxiliary["rho"]) < 4 * mle.auxiliary["rho_se"]
        assert abs(mle.slopes[0] - tpm.slopes[0]) < 4 * mle.se[1]

    def test_two_step_consistent_under_linear_index(self):
        reps = 40
        est = np.array([heckman_two_step(s.Y, s.X, s.D).slopes[0]
                        for s in (draw_sample(LINEAR, stream(40, r), n=100_000)
                                  for r in range(reps))])
        mc_se = est.std(ddof=1) / np.sqrt(reps)
        assert abs(est.mean() - 0.5) <= 2 * mc_se

    def test_all_selected_reduces_to_ols(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((200, 2))
        Y = 1 + X @ [0.5, 0.25] + rng.standard_normal(200)
        D = np.ones(200)
        ols = tpm_ols(Y, X, D)
        for fit in (heckman_two_step(Y, X, D), heckman_mle(Y, X, D)):
            assert_allclose(fit.beta, ols.beta, atol=1e-12)
            assert fit.auxiliary["no_selection"]


def test_oracle_noiseless_recovery():
    spec = DgpSpec.from_dict({**builtin_spec("dgp1").to_dict(), "outcome_noise_scale": 0.0})
    s = draw_sample(spec, stream(6, 0), n=2000)
    fit = oracle_estimate(s.Y, s.X, s.D, s.Zpoly)
    assert_allclose(fit.slopes, [0.5, 0.25], atol=1e-8)
    assert abs(fit.auxiliary["mills_coef"]) < 1e-8


def test_tpm_biased_on_nonmonotone_design():
    s = draw_sample(builtin_spec("dgp0a"), stream(7, 0), n=20_000)
    assert tpm_ols(s.Y, s.X, s.D).slopes[0] < 0.2
