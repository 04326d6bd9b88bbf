"""Closed-form fairness of personalized BLR models under DP, plus a Monte-Carlo check.

For client ``n`` the gap between its personalized optimum and its local
optimum splits coordinate-wise into a deterministic part
``A_nl = alpha1(lam) * alpha_nl`` and a Gaussian part ``B_nl`` of variance
``sigma_B2 = sigma_w2 + alpha0(lam)^2 sigma_z2 / N^2``.  Fairness is the
expected across-client variance of ``||A_n + B_n||^2``.

Two closed forms are provided:

* :func:`fairness_R` is the standard closed form
  ``2d sigma_B2 + 4 sigma_B2 alpha1^2 G1 + alpha1^4 (G2 - G1^2)``;
* :func:`fairness_R_exact` is the expectation evaluated exactly under the same
  Gaussian model,
  ``(N-1)/N * (2d sigma_B2^2 + 4 sigma_B2 alpha1^2 G1) + alpha1^4 (G2 - G1^2)``.

Only the second agrees with :func:`mc_oracle`; the first is kept because the
optimal-weight analysis in :mod:`dpditto.lambdaopt` is built on it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .blr import BlrParams, sigma_w2
from .errors import InsufficientTrialsError

MIN_TRIALS = 10_000


@dataclass(frozen=True)
class FairnessParams:
    s1: float
    s2: float
    g1: float
    g2: float
    sigma_w2: float
    sigma_z2: float
    n: int
    d: int
    b: int
    rho: float

    def __post_init__(self):
        if abs(self.s2 - 1.0 / self.n) > 1e-12:
            raise ValueError("s2 must equal 1/N")
        if self.g1 < 0 or self.g2 < 0:
            raise ValueError("g1 and g2 must be non-negative")
        if self.sigma_w2 < 0:
            raise ValueError("sigma_w2 must be non-negative")
        if self.sigma_z2 < 0:
            raise ValueError("sigma_z2 must be non-negative")

    @property
    def spread(self) -> float:
        """``G2 - G1^2``: the across-client variance of ``||alpha_n||^2``."""
        return self.g2 - self.g1 ** 2

    def with_sigma_z2(self, sigma_z2: float) -> "FairnessParams":
        return replace(self, sigma_z2=float(sigma_z2))


def s1_value(n: int, sigma2: float, rho: float, zeta2: float) -> float:
    return sigma2 / (n * (sigma2 + rho * zeta2))


def alpha0(lam: float, b: float, rho: float):
    """Weight the personalized optimum puts on the (noisy) global mean; in [0, 1]."""
    lam = np.asarray(lam, dtype=np.float64)
    out = b * lam / ((2 - lam) * rho + b * lam)
    return float(out) if out.ndim == 0 else out


def alpha1(lam: float, fp: FairnessParams):
    return fp.s1 - fp.s2 * alpha0(lam, fp.b, fp.rho)


def alpha_coeffs(u_hat) -> tuple[np.ndarray, float, float]:
    """``alpha_nl = (N-1) u_hat_nl - sum_{m != n} u_hat_ml`` and its moments ``G1``, ``G2``."""
    u = np.atleast_2d(np.asarray(u_hat, dtype=np.float64))
    n = u.shape[0]
    alpha = (n - 1) * u - (u.sum(axis=0) - u)
    sq = (alpha ** 2).sum(axis=1)
    g1 = float(sq.mean())
    g2 = float((sq ** 2).mean())
    if g2 - g1 ** 2 < -1e-12 * max(g2, 1.0):
        warnings.warn("G2 - G1^2 is negative beyond rounding", RuntimeWarning, stacklevel=2)
    return alpha, g1, g2


def fairness_params(n: int, d: int, b: int, rho: float, zeta2: float, sigma2: float,
                    u_hat, sigma_z2: float) -> FairnessParams:
    _, g1, g2 = alpha_coeffs(u_hat)
    sw = sigma_w2(BlrParams(n, b, d, rho, zeta2, sigma2))
    return FairnessParams(s1=s1_value(n, sigma2, rho, zeta2), s2=1.0 / n, g1=g1, g2=g2,
                          sigma_w2=sw, sigma_z2=sigma_z2, n=n, d=d, b=b, rho=rho)


def fairness_params_from_instance(instance, sigma_z2: float, u_hat=None) -> FairnessParams:
    p = instance.params
    u = instance.u_hat if u_hat is None else u_hat
    return fairness_params(p.n, p.d, p.b, p.rho, p.zeta2, p.sigma2, u, sigma_z2)


def sigma_b2(lam: float, fp: FairnessParams):
    return fp.sigma_w2 + alpha0(lam, fp.b, fp.rho) ** 2 * fp.sigma_z2 / fp.n ** 2


def fairness_R(lam, fp: FairnessParams):
    """Standard closed-form fairness measure (lower is fairer)."""
    sb = sigma_b2(lam, fp)
    a1 = alpha1(lam, fp)
    return 2 * fp.d * sb + 4 * sb * a1 ** 2 * fp.g1 + a1 ** 4 * fp.spread


def fairness_R_exact(lam, fp: FairnessParams):
    """Exact expected across-client variance under independent Gaussian ``B_nl``."""
    sb = sigma_b2(lam, fp)
    a1 = alpha1(lam, fp)
    c = (fp.n - 1) / fp.n
    return c * (2 * fp.d * sb ** 2 + 4 * sb * a1 ** 2 * fp.g1) + a1 ** 4 * fp.spread


def mc_oracle(lam: float, fp: FairnessParams, u_hat, trials: int, rng: np.random.Generator,
              mode: str = "independent", block: int = 50_000) -> tuple[float, float]:
    """Monte-Carlo estimate of the across-client variance of ``||A_n + B_n||^2``.

    ``mode="independent"`` draws every ``B_nl`` i.i.d. from ``N(0, sigma_B2)``.
    ``mode="correlated"`` instead builds ``B_n = alpha0 * z / N - theta_n`` with
    one aggregate noise vector ``z ~ N(0, sigma_z2 I)`` shared by all clients and
    independent ``theta_n ~ N(0, sigma_w2 I)``.

    Returns ``(mean, standard error)`` over trials.
    """
    if trials < MIN_TRIALS:
        raise InsufficientTrialsError(f"need at least {MIN_TRIALS} trials, got {trials}")
    if mode not in ("independent", "correlated"):
        raise ValueError(f"unknown oracle mode {mode!r}")
    alpha, _, _ = alpha_coeffs(u_hat)
    n, d = alpha.shape
    A = alpha1(lam, fp) * alpha
    a0 = alpha0(lam, fp.b, fp.rho)
    sb = float(np.sqrt(sigma_b2(lam, fp)))

    total = 0.0
    total_sq = 0.0
    done = 0
    while done < trials:
        m = min(block, trials - done)
        if mode == "independent":
            B = rng.normal(0.0, sb, size=(m, n, d)) if sb > 0 else np.zeros((m, n, d))
        else:
            z = rng.normal(0.0, np.sqrt(fp.sigma_z2), size=(m, 1, d))
            theta = rng.normal(0.0, np.sqrt(fp.sigma_w2), size=(m, n, d))
            B = a0 * z / fp.n - theta
        q = ((A + B) ** 2).sum(axis=2)
        v = (q ** 2).mean(axis=1) - q.mean(axis=1) ** 2
        total += float(v.sum())
        total_sq += float((v ** 2).sum())
        done += m
    mean = total / trials
    var = max(total_sq / trials - mean ** 2, 0.0)
    if sb == 0 and mode == "independent":
        var = 0.0
    return mean, float(np.sqrt(var * trials / (trials - 1) / trials))
