import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dpditto import blr, fairness as F
from dpditto.core import seeded_rng
from dpditto.errors import InsufficientTrialsError
from oracles import variance_expectation


def fp_for(n=3, d=2, b=8, rho=2.0, zeta2=0.5, sigma2=0.5, sigma_z2=0.3, seed=0):
    i = blr.generate_instance(blr.BlrParams(n, b, d, rho, zeta2, sigma2), rng=seeded_rng(seed))
    return F.fairness_params_from_instance(i, sigma_z2), i


def test_alpha0_values():
    assert F.alpha0(0.0, 5, 3) == 0.0
    assert F.alpha0(2.0, 5, 3) == 1.0
    assert F.alpha0(1.0, 4, 4) == pytest.approx(0.5)
    lams = np.linspace(0, 2, 101)
    assert np.all(np.diff(F.alpha0(lams, 3, 7)) > 0)


def test_alpha_coefficients():
    a, g1, g2 = F.alpha_coeffs(np.tile([1.0, 2.0], (4, 1)))
    assert np.all(a == 0) and g1 == 0 and g2 == 0
    a, g1, g2 = F.alpha_coeffs(np.array([[1.0], [-1.0]]))
    np.testing.assert_allclose(a.ravel(), [2.0, -2.0])
    assert (g1, g2) == (4.0, 16.0)
    a, _, _ = F.alpha_coeffs(np.random.default_rng(0).normal(size=(5, 3)))
    np.testing.assert_allclose(a.sum(axis=0), 0, atol=1e-12)


def test_alpha1_values():
    fp, _ = fp_for()
    assert F.alpha1(0.0, fp) == pytest.approx(fp.s1)
    assert F.s1_value(4, 0.7, 2.0, 0.0) == pytest.approx(0.25)
    lam_zero = 2 * fp.rho * (fp.n * fp.s1) / ((1 - fp.n * fp.s1) * fp.b + fp.rho * fp.n * fp.s1)
    assert F.alpha1(lam_zero, fp) == pytest.approx(0, abs=1e-15)


def test_standard_measure_special_cases():
    fp, _ = fp_for()
    lam = 2 * fp.rho * (fp.n * fp.s1) / ((1 - fp.n * fp.s1) * fp.b + fp.rho * fp.n * fp.s1)
    sb = fp.sigma_w2 + (fp.n * fp.s1) ** 2 * fp.sigma_z2 / fp.n ** 2
    assert F.fairness_R(lam, fp) == pytest.approx(2 * fp.d * sb)
    flat = F.FairnessParams(fp.s1, fp.s2, 0.0, 0.0, fp.sigma_w2, 0.0, fp.n, fp.d, fp.b, fp.rho)
    assert F.fairness_R(0.7, flat) == pytest.approx(2 * fp.d * fp.sigma_w2)


def test_noise_free_reduction():
    fp, _ = fp_for(sigma_z2=0.0)
    for lam in (0.0, 0.3, 1.5):
        a1 = F.alpha1(lam, fp)
        want = 2 * fp.d * fp.sigma_w2 + 4 * fp.sigma_w2 * a1 ** 2 * fp.g1 + a1 ** 4 * fp.spread
        assert F.fairness_R(lam, fp) == want


@given(st.floats(0.01, 2.0))
def test_measures_increase_with_noise(lam):
    fp, _ = fp_for()
    zs = np.linspace(0, 5, 30)
    r = [F.fairness_R(lam, fp.with_sigma_z2(z)) for z in zs]
    rx = [F.fairness_R_exact(lam, fp.with_sigma_z2(z)) for z in zs]
    assert np.all(np.diff(r) > 0) and np.all(np.diff(rx) > 0)


def test_exact_measure_matches_noncentral_moments():
    fp, i = fp_for(n=4, d=3)
    alpha, _, _ = F.alpha_coeffs(i.u_hat)
    for lam in (0.1, 1.0, 1.9):
        want = variance_expectation(F.alpha1(lam, fp) * alpha, F.sigma_b2(lam, fp))
        assert F.fairness_R_exact(lam, fp) == pytest.approx(want, rel=1e-12)


def test_oracle_deterministic_without_noise():
    fp, i = fp_for()
    fp0 = F.FairnessParams(fp.s1, fp.s2, fp.g1, fp.g2, 0.0, 0.0, fp.n, fp.d, fp.b, fp.rho)
    alpha, _, _ = F.alpha_coeffs(i.u_hat)
    q = ((F.alpha1(0.4, fp0) * alpha) ** 2).sum(axis=1)
    mean, se = F.mc_oracle(0.4, fp0, i.u_hat, 10_000, np.random.default_rng(0))
    assert se == 0.0
    assert mean == pytest.approx(np.mean(q ** 2) - np.mean(q) ** 2, rel=1e-12)


def test_oracle_homogeneous_clients():
    fp, i = fp_for(n=3, d=2)
    u = np.tile(i.u_hat[0], (3, 1))
    fph = F.FairnessParams(fp.s1, fp.s2, 0.0, 0.0, fp.sigma_w2, fp.sigma_z2, 3, 2, fp.b, fp.rho)
    mean, se = F.mc_oracle(0.5, fph, u, 200_000, seeded_rng(1))
    sb = F.sigma_b2(0.5, fph)
    # the across-client variance has expectation (N-1)/N * 2 d sigma_B^4
    assert abs(mean - (2 / 3) * 2 * 2 * sb ** 2) < 3 * se


def test_exact_measure_agrees_with_oracle():
    fp, i = fp_for(n=3, d=2)
    for lam in (0.1, 1.0, 1.9):
        mean, se = F.mc_oracle(lam, fp, i.u_hat, 400_000, seeded_rng(2, lam * 10))
        assert abs(mean - F.fairness_R_exact(lam, fp)) < 3.5 * se


def test_correlated_mode_runs():
    fp, i = fp_for()
    mean, se = F.mc_oracle(1.0, fp, i.u_hat, 20_000, seeded_rng(3), mode="correlated")
    assert math.isfinite(mean) and se > 0


def test_oracle_needs_trials():
    fp, i = fp_for()
    with pytest.raises(InsufficientTrialsError):
        F.mc_oracle(1.0, fp, i.u_hat, 9_999, np.random.default_rng(0))


def test_params_validation():
    fp, _ = fp_for()
    with pytest.raises(ValueError):
        F.FairnessParams(fp.s1, 0.5, fp.g1, fp.g2, fp.sigma_w2, 0.1, 3, 2, 8, 2.0)
