"""Reference implementations used only by the tests.

They are written independently of the library: straight from the defining
formulas, in high precision where cancellation matters, or by brute force.
"""

from __future__ import annotations

import mpmath as mp
import numpy as np

mp.mp.dps = 50


def sigma_u_ref(delta_s, t, n, eps, delta):
    ds = mp.mpf(delta_s)
    return float(ds * mp.sqrt(2 * t * n * mp.log(1 / mp.mpf(delta))) / (mp.mpf(eps) * n))


def sigma_z_ref(delta_s, t, eps, delta):
    ds = mp.mpf(delta_s)
    return float(ds * mp.sqrt(2 * t * mp.log(1 / mp.mpf(delta))) / mp.mpf(eps))


def h_ref(eps_l, eps_g, psi1, psi2, k, beta, phi_l, t):
    """Closed-form bound in 50-digit arithmetic; picks the coincident form when eps_l == eps_g."""
    el, eg = mp.mpf(eps_l), mp.mpf(eps_g)
    psi1, psi2, k, beta, phi_l = map(mp.mpf, (psi1, psi2, k, beta, phi_l))
    T = mp.mpf(t)
    if t == 0:
        return float(psi2)
    geo = (el ** T - 1) / (el - 1)
    if el != eg:
        cross = (el ** T - eg ** T) / (el - eg)
        noise = ((el ** (T - 1) - eg ** (T - 1)) / (el / eg - 1) - (el ** (T - 1) - 1) / (el - 1)) * phi_l * T / (eg - 1)
    else:
        cross = T * el ** (T - 1)
        noise = ((T - 1) * el ** (T - 1) - (el ** (T - 1) - 1) / (el - 1)) * phi_l * T / (el - 1)
    return float(el ** T * psi2 + k * geo + beta * (cross * psi1 + noise))


def h_sums(eps_l, eps_g, psi1, psi2, k, beta, phi_l, t):
    """Same bound from the unrolled recursion as explicit double sums."""
    s_geo = sum(eps_l ** x for x in range(t))
    s_cross = sum(eps_l ** x * eps_g ** (t - 1 - x) for x in range(t))
    s_noise = sum(eps_l ** x * eps_g ** y for x in range(t - 1) for y in range(t - 1 - x))
    return eps_l ** t * psi2 + k * s_geo + beta * (s_cross * psi1 + s_noise * phi_l * t)


def personalized_argmin(X, Y, omega, lam):
    """Minimizer of ``(1 - lam/2) (1/b)||X w - Y||^2 + (lam/2)||w - omega||^2`` by a direct solve."""
    b, d = X.shape
    H = (1 - lam / 2) * (2.0 / b) * X.T @ X + lam * np.eye(d)
    rhs = (1 - lam / 2) * (2.0 / b) * X.T @ Y + lam * omega
    return np.linalg.solve(H, rhs)


def single_machine_gd(X, Y, w0, eta, t):
    w = np.array(w0, dtype=float)
    b = X.shape[0]
    for _ in range(t):
        w = w - eta * (2.0 / b) * X.T @ (X @ w - Y)
    return w


def variance_expectation(a_rows, sigma_b2):
    """Exact expected population variance of ``||a_n + B_n||^2`` with i.i.d. ``B ~ N(0, s I)``.

    Each ``q_n`` is ``s`` times a noncentral chi-square with ``d`` degrees of
    freedom and noncentrality ``||a_n||^2 / s``; independence across clients
    gives ``E[var] = var_n(E q_n) + (1 - 1/N) mean_n(Var q_n)``.
    """
    a_rows = np.asarray(a_rows, dtype=float)
    n, d = a_rows.shape
    nc = (a_rows ** 2).sum(axis=1)
    mean_q = nc + d * sigma_b2
    var_q = 2 * d * sigma_b2 ** 2 + 4 * sigma_b2 * nc
    return float(np.var(mean_q) + (1 - 1 / n) * var_q.mean())


def stationarity_direct(a0, s1, s2, d, g1, g2, sigma_w2, sigma_z2, n):
    """Derivative of the standard fairness measure by central differences in alpha0."""
    def R(a):
        sb = sigma_w2 + a * a * sigma_z2 / n ** 2
        a1 = s1 - s2 * a
        return 2 * d * sb + 4 * sb * a1 ** 2 * g1 + a1 ** 4 * (g2 - g1 ** 2)
    h = 1e-6
    return (R(a0 + h) - R(a0 - h)) / (2 * h)
