"""Convergence bounds for DP-Ditto and the search for the best aggregation count.

``h(T, lam)`` bounds ``E||w_n^T - w_n*||^2`` for the personalized models
after ``T`` noisy aggregations.  Two closed forms exist, one for
``eps_L != eps_G`` and one for the coincident case; both are rewritten as
exponential-polynomial coefficient sets, from which a linear lower bound
``h_low(T) = h0 + slope * T`` is built.  Since ``h_low`` grows without bound
while ``h(0) = psi2``, the minimizing ``T`` lies below
``T' = (psi2 - h0) / slope`` and an integer scan over ``[0, T']`` finds it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .core import AssumptionParams, PrivacySpec, TrainingConfig
from .errors import InternalConsistencyError

BRANCH_TOL = 1e-9
SERIES_TOL = 1e-9


@dataclass(frozen=True)
class BoundParams:
    assumption: AssumptionParams
    eta_g: float
    eta_l: float
    lam: float
    n: int
    d: int
    delta_s: float
    epsilon: float
    delta: float
    eps_l: float
    eps_g: float
    g_const: float
    beta: float
    phi_l: float
    phi: float
    warnings: tuple[str, ...] = ()

    @property
    def heuristic(self) -> bool:
        return bool(self.warnings)

    @property
    def branch(self) -> int:
        return 2 if abs(self.eps_l - self.eps_g) <= BRANCH_TOL else 1

    def at_lambda(self, lam: float) -> "BoundParams":
        return _derive(self.assumption, self.eta_g, self.eta_l, lam, self.n, self.d,
                       self.delta_s, self.epsilon, self.delta, extra=self._extra())

    def with_phi_l(self, phi_l: float) -> "BoundParams":
        return replace(self, phi_l=float(phi_l))

    def with_epsilon(self, epsilon: float) -> "BoundParams":
        return _derive(self.assumption, self.eta_g, self.eta_l, self.lam, self.n, self.d,
                       self.delta_s, epsilon, self.delta, extra=self._extra())

    def _extra(self):
        return tuple(w for w in self.warnings if w.startswith("model:"))


def _derive(a: AssumptionParams, eta_g, eta_l, lam, n, d, delta_s, epsilon, delta, extra=()):
    if not 0 <= lam <= 2:
        raise ValueError("lam must lie in [0, 2]")
    mu, L = a.mu, a.l_smooth
    eps_l = 1 - eta_l * ((1 - lam / 2) * mu + lam) + eta_l
    eps_g = 1 - 2 * mu * eta_g + mu * eta_g ** 2 * L
    g_const = ((1 - lam / 2) * a.g0 + lam * (a.g0 / mu + a.m_dist)) ** 2
    beta = (4 * eta_l ** 2 * lam ** 2 + 2 * eta_l * lam ** 2) / mu
    log_term = math.log(1.0 / delta)
    if math.isinf(epsilon):
        phi_l = 0.0
    else:
        phi_l = delta_s ** 2 * L * d * log_term / (n ** 2 * epsilon ** 2)
    phi = L ** 2 * delta_s ** 2 * log_term / mu
    notes = list(extra) + a.violations(eta_g, lam)
    if not eps_l < 1:
        notes.append("eps_L >= 1")
    return BoundParams(a, eta_g, eta_l, lam, n, d, delta_s, epsilon, delta,
                       eps_l, eps_g, g_const, beta, phi_l, phi, tuple(notes))


def derive_constants(assumption: AssumptionParams, config: TrainingConfig, privacy: PrivacySpec,
                     d: int, dataset_size: int, heuristic_model: bool = False) -> BoundParams:
    """Contraction factors and noise constants for the given setup.

    Assumption violations do not raise: they are recorded in
    ``BoundParams.warnings`` and the bounds are then heuristic.
    """
    from .dp import sensitivity

    extra = ("model: assumptions do not hold for this model",) if heuristic_model else ()
    bp = _derive(assumption, config.eta_g, config.eta_l, config.lam, config.n_clients, d,
                 sensitivity(privacy.clip_c, dataset_size), privacy.epsilon, privacy.delta, extra)
    if bp.warnings:
        warnings.warn("bounds are heuristic: " + "; ".join(bp.warnings), RuntimeWarning, stacklevel=2)
    return bp


def _pow(e: float, t):
    return np.power(e, np.asarray(t, dtype=np.float64))


def _geo(e: float, t):
    """``(e^t - 1) / (e - 1)`` with the series limit near ``e = 1``."""
    t = np.asarray(t, dtype=np.float64)
    if abs(e - 1) < SERIES_TOL:
        return t + 0.5 * t * (t - 1) * (e - 1)
    if e > 0:
        return np.expm1(t * math.log(e)) / (e - 1)
    return (np.power(e, t) - 1) / (e - 1)


def global_bound(bp: BoundParams, t) -> float:
    """Upper bound on the expected global loss gap after ``t`` rounds."""
    t = np.asarray(t, dtype=np.float64)
    eg_t = _pow(bp.eps_g, t)
    noise = 0.0 if math.isinf(bp.epsilon) else bp.phi * t / (bp.n * bp.epsilon ** 2)
    out = eg_t * bp.assumption.psi1 + (1 - eg_t) * noise
    return float(out) if out.ndim == 0 else out


def h(bp: BoundParams, t, lam: float | None = None):
    """Personalized-model convergence bound after ``t`` aggregations (vectorized in ``t``)."""
    if lam is not None and lam != bp.lam:
        bp = bp.at_lambda(lam)
    t = np.asarray(t, dtype=np.float64)
    el, eg = bp.eps_l, bp.eps_g
    psi1, psi2 = bp.assumption.psi1, bp.assumption.psi2
    k = (1 + bp.lam ** 2) * bp.eta_l ** 2 * bp.g_const
    base = _pow(el, t) * psi2 + k * _geo(el, t)
    tm1 = np.maximum(t - 1, 0)
    if bp.branch == 1:
        cross = (_pow(el, t) - _pow(eg, t)) / (el - eg)
        # (eL^{T-1} - eG^{T-1}) / (eL/eG - 1) - (eL^{T-1} - 1)/(eL - 1), zero at T = 0
        noise = (eg * (_pow(el, tm1) - _pow(eg, tm1)) / (el - eg) - _geo(el, tm1)) / (eg - 1)
    else:
        cross = t * _pow(el, tm1)
        noise = (tm1 * _pow(el, tm1) - _geo(el, tm1)) / (el - 1) if abs(el - 1) >= SERIES_TOL \
            else tm1 * (tm1 - 1) / 2.0
    noise = np.where(t >= 1, noise, 0.0)
    out = base + bp.beta * (cross * psi1 + noise * bp.phi_l * t)
    return float(out) if out.ndim == 0 else out


def h_brute(bp: BoundParams, t: int) -> float:
    """Direct evaluation of the unrolled recursion sums (reference for :func:`h`)."""
    el, eg = bp.eps_l, bp.eps_g
    k = (1 + bp.lam ** 2) * bp.eta_l ** 2 * bp.g_const
    s_geo = sum(el ** x for x in range(t))
    s_cross = sum(el ** x * eg ** (t - 1 - x) for x in range(t))
    s_noise = sum(el ** x * eg ** y for x in range(t - 1) for y in range(t - 1 - x))
    return (el ** t * bp.assumption.psi2 + k * s_geo
            + bp.beta * (s_cross * bp.assumption.psi1 + s_noise * bp.phi_l * t))


@dataclass(frozen=True)
class HCoeffs:
    """``h(T) = (c1 + c2 T + c3 T^2) eL^T + (c4 + c5 T) eG^T + slope T + const``.

    Branch 1 maps ``H1..H6`` to ``c1, c2, c4, c5, slope, const`` (``c3 = 0``).
    Branch 2 (``eL = eG``) has ``c4 = c5 = 0`` and its own ``calH`` names.
    """

    branch: int
    eps_l: float
    eps_g: float
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def evaluate(self, t):
        t = np.asarray(t, dtype=np.float64)
        v = self.values
        el_t = _pow(self.eps_l, t)
        if self.branch == 1:
            out = ((v["H1"] + v["H2"] * t) * el_t + (v["H3"] + v["H4"] * t) * _pow(self.eps_g, t)
                   + v["H5"] * t + v["H6"])
        else:
            out = (v["calH1"] + v["calH2"] * t + v["calH3"] * t ** 2) * el_t + v["calH5"] * t + v["calH4"]
        return float(out) if out.ndim == 0 else out


def h_coeffs(bp: BoundParams, lam: float | None = None) -> HCoeffs:
    """Exponential-polynomial coefficients of ``h``.

    Raises :class:`InternalConsistencyError` when a coefficient whose sign the
    lower-bound construction relies on has the wrong sign (contraction
    factors at or above one).
    """
    if lam is not None and lam != bp.lam:
        bp = bp.at_lambda(lam)
    el, eg, beta, phi = bp.eps_l, bp.eps_g, bp.beta, bp.phi_l
    psi1, psi2 = bp.assumption.psi1, bp.assumption.psi2
    if not (el < 1 and eg < 1):
        raise InternalConsistencyError(f"contraction factors must be < 1 (eps_L={el}, eps_G={eg})")
    k = (1 + bp.lam ** 2) * bp.eta_l ** 2 * bp.g_const
    if bp.branch == 1:
        v = {
            "H1": psi2 + beta * psi1 / (el - eg) - k / (1 - el),
            "H2": -beta * phi / ((1 - el) * (el - eg)),
            "H3": -beta * psi1 / (el - eg),
            "H4": beta * phi / ((1 - eg) * (el - eg)),
            "H5": beta * phi / ((1 - eg) * (1 - el)),
            "H6": k / (1 - el),
        }
        if v["H5"] < 0 or v["H6"] < 0:
            raise InternalConsistencyError(f"expected H5, H6 >= 0, got {v['H5']}, {v['H6']}")
    else:
        v = {
            "calH1": psi2 - k / (1 - el),
            "calH2": beta / el * (psi1 - el * phi / (1 - el) ** 2),
            "calH3": -beta * phi / (el * (1 - el)),
            "calH4": k / (1 - el),
            "calH5": beta * phi / (1 - el) ** 2,
        }
        if v["calH3"] > 0 or v["calH4"] < 0 or v["calH5"] < 0:
            raise InternalConsistencyError(f"unexpected coefficient signs in coincident branch: {v}")
    return HCoeffs(bp.branch, el, eg, v)


def min_t_pow(e: float, power: int = 1) -> tuple[int, float]:
    """Integer maximizer and maximum of ``T^power * e^T`` over ``T >= 0`` for ``0 < e < 1``.

    The continuous maximizer ``-power / ln e`` is rounded both ways and the
    larger neighbour kept.
    """
    if not 0 < e < 1:
        raise ValueError("need 0 < e < 1")
    t_cont = -power / math.log(e)
    best_t, best = 0, 0.0
    for t in {math.floor(t_cont), math.ceil(t_cont)}:
        val = t ** power * e ** t
        if val > best:
            best_t, best = t, val
    return best_t, best


def _lb_exp(c: float, e: float, power: int) -> float:
    """Lower bound of ``c T^power e^T`` over integers ``T >= 0``."""
    if c >= 0:
        return 0.0
    if e >= 1:
        return -math.inf
    if e <= 0:
        # sign alternates; bound by the magnitude
        a = abs(e)
        if a == 0:
            return c if power == 0 else 0.0
        return c if power == 0 else c * min_t_pow(a, power)[1]
    if power == 0:
        return c
    return c * min_t_pow(e, power)[1]


@dataclass(frozen=True)
class LowerBound:
    h0: float
    slope: float
    branch: int

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        out = self.h0 + self.slope * t
        return float(out) if out.ndim == 0 else out


def lower_bound(bp: BoundParams, lam: float | None = None) -> LowerBound:
    """Linear minorant ``h(T) >= h0 + slope * T`` valid for every integer ``T >= 0``.

    Each exponential term is bounded separately by the sign of its
    coefficient: ``c e^T >= min(c, 0)``, and for ``c < 0`` the term
    ``c T e^T`` (or ``c T^2 e^T``) is bounded by its minimum at
    ``T = -1/ln e`` (``-2/ln e``).
    """
    if lam is not None and lam != bp.lam:
        bp = bp.at_lambda(lam)
    hc = h_coeffs(bp)
    v = hc.values
    el, eg = hc.eps_l, hc.eps_g
    if hc.branch == 1:
        h0 = (_lb_exp(v["H1"], el, 0) + _lb_exp(v["H2"], el, 1)
              + _lb_exp(v["H3"], eg, 0) + _lb_exp(v["H4"], eg, 1) + v["H6"])
        slope = v["H5"]
        if 0 < el < 1 and 0 < eg < 1:
            h0 = max(h0, _pole_free_h0(bp, v["H6"]))
    else:
        h0 = (_lb_exp(v["calH1"], el, 0) + _lb_exp(v["calH2"], el, 1)
              + _lb_exp(v["calH3"], el, 2) + v["calH4"])
        slope = v["calH5"]
    return LowerBound(h0, slope, hc.branch)


def _pole_free_h0(bp: BoundParams, h6: float) -> float:
    """Lower bound on ``h(T) - H5 T`` that stays finite as ``eps_L -> eps_G``.

    The cross term ``(eL^T - eG^T)/(eL - eG)`` is non-negative, and the two
    noise terms together equal ``-beta phi_L T`` times the divided difference
    of ``g(e) = e^T / (1 - e)`` over ``[eG, eL]``.  Since ``g'`` increases in
    ``e``, that difference is at most ``g'(max(eL, eG))``.
    """
    e = max(bp.eps_l, bp.eps_g)
    t2 = min_t_pow(e, 2)[1] / e
    t1 = min_t_pow(e, 1)[1]
    c1 = bp.assumption.psi2 - h6
    return min(c1, 0.0) + h6 - bp.beta * bp.phi_l * (t2 / (1 - e) + t1 / (1 - e) ** 2)


@dataclass(frozen=True)
class TSearchResult:
    t_star: int
    h_star: float
    t_prime: float
    unbounded: bool
    evaluations: int


def search_T(bp: BoundParams, lam: float | None = None, t_max: int = 1000,
             t_cap: int = 1_000_000) -> TSearchResult:
    """Integer ``T`` minimizing ``h(T, lam)``.

    With a positive slope the scan covers ``[0, floor(T')]``.  Without one
    (no DP noise, or ``lam = 0``) ``h`` has no noise penalty; the scan then
    covers ``[0, t_max]`` and ``unbounded`` is set when the minimum sits at
    the cap.  ``t_cap`` bounds the scan when ``T'`` is astronomically large
    (nearly noise-free); the flag is set in that case too.
    """
    if lam is not None and lam != bp.lam:
        bp = bp.at_lambda(lam)
    psi2 = bp.assumption.psi2
    lb = lower_bound(bp)
    if lb.slope > 0 and math.isfinite(lb.h0):
        t_prime = (psi2 - lb.h0) / lb.slope
        if t_prime <= 0:
            return TSearchResult(0, psi2, t_prime, False, 1)
        upper = int(min(math.floor(t_prime), t_cap))
        capped = upper == t_cap
    else:
        t_prime = math.inf
        upper = t_max
        capped = True
    ts = np.arange(upper + 1)
    vals = h(bp, ts)
    i = int(np.argmin(vals))
    return TSearchResult(int(ts[i]), float(vals[i]), t_prime, capped and i == upper, len(ts))
