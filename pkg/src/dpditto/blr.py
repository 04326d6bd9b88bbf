"""Bayesian linear-regression testbed with orthogonal designs.

Client optima are scattered around a global optimum,
``u_n* = w* + tau_n`` with ``tau_n ~ N(0, zeta2 I)``, observations are
``Y_n = X_n u_n* + nu_n`` with ``nu_n ~ N(0, sigma2 I)`` and every design
satisfies ``X_n^T X_n = rho I``.  Under that design the personalized optimum
has a closed form in the local estimates ``u_hat_n``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ClientDataset
from .errors import InfeasibleDesignError, SingularDesignError

FORMAT_VERSION = 1


@dataclass(frozen=True)
class BlrParams:
    n: int
    b: int
    d: int
    rho: float
    zeta2: float
    sigma2: float

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be >= 1")
        if self.b < self.d:
            raise InfeasibleDesignError(f"need b >= d for an orthogonal design, got b={self.b}, d={self.d}")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.zeta2 < 0:
            raise ValueError("zeta2 must be non-negative")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")


@dataclass(frozen=True)
class BlrInstance:
    params: BlrParams
    omega_star: np.ndarray
    u_star: np.ndarray        # (N, d)
    designs: np.ndarray       # (N, b, d)
    observations: np.ndarray  # (N, b)
    u_hat: np.ndarray         # (N, d)

    def datasets(self) -> list[ClientDataset]:
        return [ClientDataset(x, y) for x, y in zip(self.designs, self.observations)]

    def to_dict(self) -> dict:
        return {
            "format": "dpditto.blr_instance",
            "version": FORMAT_VERSION,
            "params": {k: getattr(self.params, k) for k in ("n", "b", "d", "rho", "zeta2", "sigma2")},
            "omega_star": self.omega_star.tolist(),
            "u_star": self.u_star.tolist(),
            "designs": self.designs.tolist(),
            "observations": self.observations.tolist(),
            "u_hat": self.u_hat.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "BlrInstance":
        if obj.get("format") != "dpditto.blr_instance":
            raise ValueError("not a serialized BLR instance")
        if obj.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported BLR instance version {obj.get('version')}")
        p = BlrParams(**obj["params"])
        arr = {k: np.asarray(obj[k], dtype=np.float64)
               for k in ("omega_star", "u_star", "designs", "observations", "u_hat")}
        expected = {"omega_star": (p.d,), "u_star": (p.n, p.d), "designs": (p.n, p.b, p.d),
                    "observations": (p.n, p.b), "u_hat": (p.n, p.d)}
        for k, shape in expected.items():
            if arr[k].shape != shape:
                raise ValueError(f"field {k!r} has shape {arr[k].shape}, expected {shape}")
        return cls(p, **arr)

    def save(self, path) -> None:
        # repr-precision floats round-trip exactly through JSON
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "BlrInstance":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def make_design(b: int, d: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Random ``b x d`` matrix with orthogonal columns of norm ``sqrt(rho)``."""
    if b < d:
        raise InfeasibleDesignError(f"cannot build {d} orthogonal columns in dimension {b}")
    if not rho > 0:
        raise ValueError("rho must be positive")
    q, r = np.linalg.qr(rng.standard_normal((b, d)))
    # sign fix makes the draw Haar-distributed
    q = q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))
    return np.sqrt(rho) * q


def estimate_local(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Least-squares estimate ``(X^T X)^{-1} X^T Y``."""
    gram = X.T @ X
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise SingularDesignError("design matrix is rank deficient")
    return np.linalg.solve(gram, X.T @ Y)


def generate_instance(params: BlrParams, omega_star=None, rng: np.random.Generator | None = None) -> BlrInstance:
    rng = rng if rng is not None else np.random.default_rng(0)
    p = params
    w = np.zeros(p.d) if omega_star is None else np.asarray(omega_star, dtype=np.float64)
    tau = rng.normal(0.0, np.sqrt(p.zeta2), size=(p.n, p.d))
    u_star = w + tau
    designs = np.stack([make_design(p.b, p.d, p.rho, rng) for _ in range(p.n)])
    noise = rng.normal(0.0, np.sqrt(p.sigma2), size=(p.n, p.b))
    obs = np.einsum("nbd,nd->nb", designs, u_star) + noise
    u_hat = np.stack([estimate_local(x, y) for x, y in zip(designs, obs)])
    return BlrInstance(p, w.copy(), u_star, designs, obs, u_hat)


def local_loss(X, Y, u) -> float:
    r = X @ u - Y
    return float(r @ r) / X.shape[0]


def pooled_loss(instance: BlrInstance, w) -> float:
    return float(np.mean([local_loss(x, y, w) for x, y in zip(instance.designs, instance.observations)]))


def pooled_grad(instance: BlrInstance, w) -> np.ndarray:
    b = instance.params.b
    g = [2.0 / b * x.T @ (x @ w - y) for x, y in zip(instance.designs, instance.observations)]
    return np.mean(g, axis=0)


def global_optimum(instance: BlrInstance, u_local=None) -> np.ndarray:
    """Minimizer of the pooled loss, ``sum_n (X^T X)^{-1} X_n^T X_n u_n``.

    ``u_local`` replaces the local estimates (e.g. by their noisy uploads).
    """
    u = instance.u_hat if u_local is None else np.asarray(u_local, dtype=np.float64)
    grams = np.einsum("nbi,nbj->nij", instance.designs, instance.designs)
    total = grams.sum(axis=0)
    if np.linalg.matrix_rank(total) < total.shape[0]:
        raise SingularDesignError("pooled design is rank deficient")
    return np.linalg.solve(total, np.einsum("nij,nj->i", grams, u))


def perturbed_personalized_optimum(instance: BlrInstance, lam: float, noise=None) -> np.ndarray:
    """Closed-form personalized optima ``(N, d)`` when the global model is built
    from the noisy uploads ``u_hat_n + z_n``.
    """
    if not 0 <= lam <= 2:
        raise ValueError("lam must lie in [0, 2]")
    p = instance.params
    u = instance.u_hat
    z_sum = np.zeros(p.d) if noise is None else np.asarray(noise, dtype=np.float64).sum(axis=0)
    n, b, rho = p.n, p.b, p.rho
    scale = b / ((2 - lam) * rho + b * lam)
    others = u.sum(axis=0) - u  # sum over m != n
    return scale * (((2 - lam) * rho / b + lam / n) * u + (lam / n) * others + (lam / n) * z_sum)


def sigma_w2(params: BlrParams) -> float:
    p = params
    return 1.0 / ((p.n - 1) / (p.sigma2 / p.rho + p.n * p.zeta2) + p.rho / p.sigma2)


def local_opt_mixture(params: BlrParams) -> tuple[float, float]:
    """Weights on ``u_hat_n`` and on each ``u_hat_m`` (m != n) in the posterior mean of ``u_n*``."""
    p = params
    sw = sigma_w2(p)
    return sw * p.rho / p.sigma2, sw * p.rho / (p.sigma2 + p.n * p.zeta2 * p.rho)


def problem_constants(instance: BlrInstance) -> tuple[float, float]:
    """Strong convexity and smoothness ``(mu, L)`` of every client loss (both ``2 rho / b``)."""
    c = 2.0 * instance.params.rho / instance.params.b
    return c, c


def assumption_params(instance: BlrInstance, omega0=None, personal0=None):
    """Constants of the convergence analysis, measured on this instance.

    ``G0`` is the largest client gradient norm at the initial and optimal
    global models, ``M`` the largest distance from a local optimum to the
    global one, and ``psi2`` the largest squared distance from the initial
    personalized model to any personalized optimum (these lie on the segment
    between ``u_hat_n`` and ``w*`` when no noise is added).
    """
    from .core import AssumptionParams

    p = instance.params
    mu, L = problem_constants(instance)
    w0 = np.zeros(p.d) if omega0 is None else np.asarray(omega0, dtype=np.float64)
    p0 = w0 if personal0 is None else np.asarray(personal0, dtype=np.float64)
    w_opt = global_optimum(instance)
    g0 = max(float(np.linalg.norm(mu * (w - u))) for w in (w0, w_opt) for u in instance.u_hat)
    m = float(np.max(np.linalg.norm(instance.u_hat - w_opt, axis=1)))
    psi1 = pooled_loss(instance, w0) - pooled_loss(instance, w_opt)
    psi2 = float(max(np.max(((instance.u_hat - p0) ** 2).sum(axis=1)), ((w_opt - p0) ** 2).sum()))
    return AssumptionParams(mu=mu, l_smooth=L, g0=g0, m_dist=m, psi1=max(psi1, 0.0), psi2=psi2)
