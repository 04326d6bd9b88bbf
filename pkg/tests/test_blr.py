import numpy as np
import pytest
from hypothesis import given, strategies as st

from dpditto import blr
from dpditto.core import seeded_rng
from dpditto.errors import InfeasibleDesignError, SingularDesignError
from oracles import personalized_argmin


def inst(n=4, b=8, d=3, rho=2.0, zeta2=0.5, sigma2=0.3, seed=0):
    return blr.generate_instance(blr.BlrParams(n, b, d, rho, zeta2, sigma2), rng=seeded_rng(seed))


@pytest.mark.parametrize("b,d,rho", [(3, 3, 1.0), (8, 3, 4.0), (5, 1, 2.5)])
def test_design_is_scaled_orthogonal(b, d, rho):
    x = blr.make_design(b, d, rho, np.random.default_rng(0))
    np.testing.assert_allclose(x.T @ x, rho * np.eye(d), atol=1e-10)
    np.testing.assert_allclose(np.linalg.norm(x, axis=0), np.sqrt(rho), rtol=1e-12)


def test_infeasible_design():
    with pytest.raises(InfeasibleDesignError):
        blr.make_design(2, 3, 1.0, np.random.default_rng(0))
    with pytest.raises(InfeasibleDesignError):
        blr.BlrParams(2, 2, 3, 1.0, 1.0, 1.0)


def test_zero_prior_variance():
    i = inst(zeta2=0.0)
    np.testing.assert_array_equal(i.u_star, np.tile(i.omega_star, (4, 1)))


def test_noise_free_recovery():
    i = inst(sigma2=1e-14)
    assert np.max(np.linalg.norm(i.u_hat - i.u_star, axis=1)) < 1e-6


def test_client_optima_centered():
    p = blr.BlrParams(10_000, 1, 1, 1.0, 0.25, 1.0)
    i = blr.generate_instance(p, rng=seeded_rng(5))
    assert abs(np.mean(i.u_star - i.omega_star)) < 3 * 0.5 / 100


def test_estimate_local():
    y = np.array([1.0, -2.0, 3.0])
    np.testing.assert_allclose(blr.estimate_local(np.eye(3), y), y)
    x = np.random.default_rng(1).normal(size=(6, 2))
    u = np.array([0.5, -1.5])
    np.testing.assert_allclose(blr.estimate_local(x, x @ u), u, atol=1e-10)
    with pytest.raises(SingularDesignError):
        blr.estimate_local(np.ones((4, 2)), np.ones(4))


def test_local_estimate_minimizes_loss():
    i = inst()
    rng = np.random.default_rng(2)
    x, y, u = i.designs[0], i.observations[0], i.u_hat[0]
    base = blr.local_loss(x, y, u)
    assert all(base <= blr.local_loss(x, y, u + rng.normal(0, 0.1, 3)) for _ in range(100))


def test_global_optimum():
    i = inst(n=1)
    np.testing.assert_allclose(blr.global_optimum(i), i.u_hat[0], atol=1e-12)
    i = inst(n=6)
    w = blr.global_optimum(i)
    np.testing.assert_allclose(w, i.u_hat.mean(axis=0), atol=1e-12)
    assert np.linalg.norm(blr.pooled_grad(i, w)) < 1e-8


def test_personalized_optimum_endpoints():
    i = inst()
    z = np.random.default_rng(3).normal(size=(4, 3))
    np.testing.assert_allclose(blr.perturbed_personalized_optimum(i, 0.0, z), i.u_hat, atol=1e-12)
    full = blr.perturbed_personalized_optimum(i, 2.0, z)
    expected = (i.u_hat.sum(axis=0) + z.sum(axis=0)) / 4
    np.testing.assert_allclose(full, np.tile(expected, (4, 1)), atol=1e-12)


@given(st.integers(0, 10**6), st.floats(0, 2))
def test_personalized_optimum_matches_direct_solve(seed, lam):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(1, 6)), int(rng.integers(1, 5))
    b = int(rng.integers(d, 9))
    i = blr.generate_instance(blr.BlrParams(n, b, d, float(rng.uniform(0.2, 5)), 1.0, 0.5), rng=rng)
    z = rng.normal(size=(n, d))
    omega = (i.u_hat + z).mean(axis=0)
    got = blr.perturbed_personalized_optimum(i, lam, z)
    for k in range(n):
        ref = personalized_argmin(i.designs[k], i.observations[k], omega, lam)
        assert np.linalg.norm(got[k] - ref) < 1e-8


def test_distance_to_local_grows_with_lambda():
    i = inst()
    lams = np.linspace(0, 2, 41)
    dist = [np.linalg.norm(blr.perturbed_personalized_optimum(i, l) - i.u_hat, axis=1) for l in lams]
    assert np.all(np.diff(np.array(dist), axis=0) >= -1e-12)


def test_sigma_w2_values():
    assert blr.sigma_w2(blr.BlrParams(2, 1, 1, 1.0, 1.0, 1.0)) == pytest.approx(0.75)
    assert blr.sigma_w2(blr.BlrParams(1, 3, 1, 2.0, 1.0, 0.5)) == pytest.approx(0.25)
    assert blr.sigma_w2(blr.BlrParams(3, 3, 1, 2.0, 1e12, 0.5)) == pytest.approx(0.25, rel=1e-9)


def test_mixture_coefficients():
    cs, co = blr.local_opt_mixture(blr.BlrParams(2, 1, 1, 1.0, 1.0, 1.0))
    assert (cs, co) == (pytest.approx(0.75), pytest.approx(0.25))
    _, co = blr.local_opt_mixture(blr.BlrParams(2, 1, 1, 1.0, 1e12, 1.0))
    assert co < 1e-11


@given(st.integers(1, 50), st.floats(0.01, 10), st.floats(0, 10), st.floats(0.01, 10))
def test_mixture_weights_sum_at_most_one(n, rho, zeta2, sigma2):
    cs, co = blr.local_opt_mixture(blr.BlrParams(n, 1, 1, rho, zeta2, sigma2))
    assert cs + (n - 1) * co <= 1 + 1e-12


def test_instance_statistics():
    p = blr.BlrParams(4000, 6, 2, 3.0, 0.4, 0.2)
    i = blr.generate_instance(p, rng=seeded_rng(8))
    tau = (i.u_star - i.omega_star).ravel()
    se = 0.4 * np.sqrt(2 / (tau.size - 1))
    assert abs(tau.var() - 0.4) < 3 * se
    # u_hat - u_star ~ N(0, sigma2 / rho) under orthogonal designs
    e = (i.u_hat - i.u_star).ravel()
    v = 0.2 / 3.0
    assert abs(e.var() - v) < 3 * v * np.sqrt(2 / (e.size - 1))


def test_serialization_round_trip(tmp_path):
    i = inst()
    path = tmp_path / "inst.json"
    i.save(path)
    j = blr.BlrInstance.load(path)
    assert j.params == i.params
    for f in ("omega_star", "u_star", "designs", "observations", "u_hat"):
        assert np.array_equal(getattr(i, f), getattr(j, f))
    bad = i.to_dict()
    bad["u_hat"] = bad["u_hat"][:-1]
    with pytest.raises(ValueError):
        blr.BlrInstance.from_dict(bad)


def test_assumption_constants_are_consistent():
    i = inst(rho=12.0)
    a = blr.assumption_params(i)
    assert a.mu == a.l_smooth == pytest.approx(2 * 12.0 / 8)
    assert a.psi1 >= 0 and a.psi2 >= 0 and a.g0 > 0
