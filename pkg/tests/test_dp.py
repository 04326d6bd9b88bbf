import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from dpditto import dp
from dpditto.core import seeded_rng
from dpditto.errors import InvalidBudgetError
from oracles import sigma_u_ref, sigma_z_ref


def test_sensitivity_values():
    assert dp.sensitivity(20, 100) == pytest.approx(0.4, rel=1e-15)
    assert dp.sensitivity(20, 3000) == pytest.approx(0.013333333333333334, rel=1e-15)
    assert dp.sensitivity(1e-300, 10) < 1e-299
    with pytest.raises(ZeroDivisionError):
        dp.sensitivity(1.0, 0)


def test_anchor_calibration():
    c = dp.calibrate(0.4, 30, 20, 10, 0.01)
    # frozen from a 50-digit evaluation of the calibration formula
    assert c.sigma_u == pytest.approx(0.14867688755399354, rel=1e-13)
    assert c.sigma_z == pytest.approx(0.66490325450764397, rel=1e-13)
    assert c.sigma_u == pytest.approx(sigma_u_ref(0.4, 30, 20, 10, 0.01), rel=1e-13)


def test_infinite_budget_means_no_noise():
    c = dp.calibrate(0.4, 30, 20, math.inf, 0.01)
    assert c.sigma_u == 0 and c.sigma_z == 0


@pytest.mark.parametrize("kw", [dict(delta=1.0), dict(delta=0.0), dict(eps=0.0), dict(t=0), dict(n=0)])
def test_invalid_budget(kw):
    args = dict(delta_s=0.4, t=30, n=20, eps=10.0, delta=0.01) | kw
    with pytest.raises(InvalidBudgetError):
        dp.calibrate(args["delta_s"], args["t"], args["n"], args["eps"], args["delta"])


@given(st.floats(1e-4, 10), st.integers(1, 500), st.integers(1, 200), st.floats(0.01, 1000), st.floats(1e-8, 0.5))
def test_variance_relation_and_formula(ds, t, n, eps, delta):
    c = dp.calibrate(ds, t, n, eps, delta)
    assert c.sigma_z ** 2 == pytest.approx(n * c.sigma_u ** 2, rel=1e-12)
    assert c.sigma_z == pytest.approx(sigma_z_ref(ds, t, eps, delta), rel=1e-12)


def test_monotone_in_eps_and_rounds():
    eps = np.geomspace(0.1, 100, 40)
    su = [dp.calibrate(0.4, 30, 20, e, 0.01).sigma_u for e in eps]
    assert np.all(np.diff(su) < 0)
    su_t = [dp.calibrate(0.4, t, 20, 10, 0.01).sigma_u for t in range(1, 60)]
    assert np.all(np.diff(su_t) > 0)


def test_clip_examples():
    np.testing.assert_allclose(dp.clip_model(np.array([3.0, 4.0]), 1.0), [0.6, 0.8], rtol=1e-15)
    v = np.array([3.0, 4.0])
    out = dp.clip_model(v, 20.0)
    assert np.array_equal(out, v)
    assert np.array_equal(dp.clip_model(np.zeros(3), 0.5), np.zeros(3))


vectors = arrays(np.float64, st.integers(1, 50), elements=st.floats(-1e6, 1e6))


@given(vectors, st.floats(1e-3, 1e3))
def test_clip_norm_bound_and_idempotence(v, c):
    out = dp.clip_model(v, c)
    assert np.linalg.norm(out) <= c + 1e-12
    assert np.array_equal(dp.clip_model(out, c), out)


def test_perturb_zero_sigma_is_identity():
    v = np.arange(5.0)
    assert np.array_equal(dp.perturb(v, 0.0, seeded_rng(0)), v)


def test_perturb_statistics():
    z = dp.perturb(np.zeros(10**6), 0.5, seeded_rng(4))
    assert abs(z.std() - 0.5) < 0.005
    assert abs(z.mean()) < 3 * 0.5 / 1e3
    # variance within 3 standard errors; Var(s^2) = 2 sigma^4 / (n-1)
    se = math.sqrt(2 * 0.5 ** 4 / (z.size - 1))
    assert abs(z.var() - 0.25) < 3 * se
