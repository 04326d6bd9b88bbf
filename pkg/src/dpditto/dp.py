"""Gaussian mechanism for uploaded local models.

Clipping bounds every upload to Euclidean norm ``C``, which gives a
per-sample sensitivity of ``2C/|D_n|``.  The per-client noise level is
calibrated once for the full training horizon ``T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidBudgetError


@dataclass(frozen=True)
class NoiseCalibration:
    delta_s: float
    sigma_u: float
    sigma_z: float
    n: int
    rounds: int

    @property
    def sigma_z2(self) -> float:
        return self.sigma_z ** 2


def sensitivity(clip_c: float, dataset_size: int) -> float:
    if dataset_size == 0:
        raise ZeroDivisionError("dataset_size must be >= 1")
    if dataset_size < 0 or clip_c < 0:
        raise ValueError("clip_c and dataset_size must be non-negative")
    return 2.0 * clip_c / dataset_size


def calibrate(delta_s: float, t_rounds: int, n: int, eps: float, delta: float) -> NoiseCalibration:
    """Noise standard deviations giving (eps, delta)-DP over ``t_rounds`` uploads.

    ``sigma_u = delta_s * sqrt(2 T N ln(1/delta)) / (eps N)`` per client and
    ``sigma_z = delta_s * sqrt(2 T ln(1/delta)) / eps`` for the summed noise.
    ``eps = inf`` disables the noise.
    """
    if not 0 < delta < 1:
        raise InvalidBudgetError(f"delta must lie in (0, 1), got {delta}")
    if not eps > 0:
        raise InvalidBudgetError(f"eps must be positive, got {eps}")
    if t_rounds < 1 or n < 1:
        raise InvalidBudgetError("t_rounds and n must be >= 1")
    if math.isinf(eps):
        return NoiseCalibration(delta_s, 0.0, 0.0, n, t_rounds)
    log_term = math.log(1.0 / delta)
    sigma_z = delta_s * math.sqrt(2.0 * t_rounds * log_term) / eps
    # sigma_u written as sigma_z / sqrt(N) keeps sigma_z^2 = N sigma_u^2 tight
    sigma_u = sigma_z / math.sqrt(n)
    return NoiseCalibration(delta_s, sigma_u, sigma_z, n, t_rounds)


def clip_model(v: np.ndarray, clip_c: float) -> np.ndarray:
    """Scale ``v`` onto the ball of radius ``clip_c``; inputs inside are returned as-is."""
    if not clip_c > 0:
        raise ValueError("clip_c must be positive")
    norm = float(np.linalg.norm(v))
    if norm <= clip_c:
        return v
    scale = clip_c / norm
    out = v * scale
    # rounding can leave the norm a few ulps above clip_c; shrink until it is not,
    # which also makes clipping idempotent
    while np.linalg.norm(out) > clip_c:
        scale = np.nextafter(scale, 0.0)
        out = v * scale
    return out


def perturb(v: np.ndarray, sigma_u: float, rng: np.random.Generator) -> np.ndarray:
    if sigma_u < 0:
        raise ValueError("sigma_u must be non-negative")
    if sigma_u == 0:
        return v
    return v + rng.normal(0.0, sigma_u, size=np.shape(v))
