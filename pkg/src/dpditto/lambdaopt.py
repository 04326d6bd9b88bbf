"""Choosing the regularization weight: a cubic stationarity condition for
fairness, its closed-form solution, and searches over ``(T, lam)``.

The fairness measure is a quartic in ``alpha0 = b lam / ((2 - lam) rho + b lam)``,
so its stationarity condition is a cubic.  Roots are found with the
trigonometric/Cardano formulas and mapped back to ``lam``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from . import bounds, dp, fairness
from .errors import DegenerateProblemError, InternalConsistencyError, NumericalError

LAMBDA_GRID = (0.0, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 2.0)


def uniqueness_condition(clip_c: float, d: int, n: int, s1: float) -> bool:
    """Sufficient condition for a single stationary point in ``alpha0 in [0, 1]``."""
    if not s1 > 0:
        raise ValueError("s1 must be positive")
    return clip_c < math.sqrt(d) / (2 * n * s1)


@dataclass(frozen=True)
class CubicProblem:
    """``c3 a^3 + c2 a^2 + c1 a + c0`` in ``a = alpha0``."""

    c3: float
    c2: float
    c1: float
    c0: float
    params: fairness.FairnessParams
    form: str = "standard"

    @property
    def coeffs(self) -> tuple[float, float, float, float]:
        return self.c3, self.c2, self.c1, self.c0

    @property
    def degenerate(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def __call__(self, a):
        a = np.asarray(a, dtype=np.float64)
        out = ((self.c3 * a + self.c2) * a + self.c1) * a + self.c0
        return float(out) if out.ndim == 0 else out


def stationarity_lhs(a0, fp: fairness.FairnessParams, form: str = "standard"):
    """Derivative of the fairness measure w.r.t. ``alpha0``, in factored form."""
    a0 = np.asarray(a0, dtype=np.float64)
    s = fp.sigma_z2 / fp.n ** 2
    a1 = fp.s1 - fp.s2 * a0
    sb = fp.sigma_w2 + a0 ** 2 * s
    if form == "standard":
        out = (4 * fp.d * s * a0 + 8 * fp.g1 * s * a1 ** 2 * a0
               - 8 * fp.s2 * fp.g1 * sb * a1 - 4 * fp.s2 * fp.spread * a1 ** 3)
    elif form == "exact":
        c = (fp.n - 1) / fp.n
        out = (8 * c * fp.d * s * a0 * sb + 8 * c * fp.g1 * s * a0 * a1 ** 2
               - 8 * c * fp.s2 * fp.g1 * sb * a1 - 4 * fp.s2 * fp.spread * a1 ** 3)
    else:
        raise ValueError(f"unknown form {form!r}")
    return float(out) if out.ndim == 0 else out


def expand_cubic(fp: fairness.FairnessParams, form: str = "standard") -> CubicProblem:
    """Expand the stationarity condition into monomial coefficients.

    ``form="exact"`` expands the derivative of :func:`fairness.fairness_R_exact`
    instead of the standard measure.
    """
    a0 = Polynomial([0.0, 1.0])
    a1 = Polynomial([fp.s1, -fp.s2])
    s = fp.sigma_z2 / fp.n ** 2
    sb = Polynomial([fp.sigma_w2, 0.0, s])
    if form == "standard":
        p = 4 * fp.d * s * a0 + 8 * fp.g1 * s * a0 * a1 ** 2 - 8 * fp.s2 * fp.g1 * sb * a1 \
            - 4 * fp.s2 * fp.spread * a1 ** 3
    elif form == "exact":
        c = (fp.n - 1) / fp.n
        p = 8 * c * fp.d * s * a0 * sb + 8 * c * fp.g1 * s * a0 * a1 ** 2 \
            - 8 * c * fp.s2 * fp.g1 * sb * a1 - 4 * fp.s2 * fp.spread * a1 ** 3
    else:
        raise ValueError(f"unknown form {form!r}")
    c = np.zeros(4)
    c[: len(p.coef)] = p.coef[:4]
    return CubicProblem(float(c[3]), float(c[2]), float(c[1]), float(c[0]), fp, form)


def cubic_roots(c3: float, c2: float, c1: float, c0: float) -> list[float]:
    """Real roots of ``c3 x^3 + c2 x^2 + c1 x + c0``, ascending.

    Three real roots use the trigonometric form, a single one uses Cardano's
    cube roots; both are polished with Newton steps on the original
    polynomial.  Lower-degree inputs fall through to the quadratic or linear
    formula.
    """
    scale = max(abs(c3), abs(c2), abs(c1), abs(c0))
    if scale == 0:
        raise DegenerateProblemError("all polynomial coefficients are zero")
    tiny = 1e-14 * scale
    if abs(c3) <= tiny:
        if abs(c2) <= tiny:
            if abs(c1) <= tiny:
                raise DegenerateProblemError("polynomial has no roots (nonzero constant)")
            return [-c0 / c1]
        disc = c1 * c1 - 4 * c2 * c0
        if disc < 0:
            return []
        q = -0.5 * (c1 + math.copysign(math.sqrt(disc), c1))
        roots = [q / c2] + ([c0 / q] if q != 0 else [])
        return sorted(set(roots))

    a, b, c = c2 / c3, c1 / c3, c0 / c3
    shift = a / 3
    p = b - a * a / 3
    q = 2 * a ** 3 / 27 - a * b / 3 + c
    disc = (q / 2) ** 2 + (p / 3) ** 3
    if p < 0 and disc <= 0:
        r = 2 * math.sqrt(-p / 3)
        arg = max(-1.0, min(1.0, 3 * q / (p * r)))
        theta = math.acos(arg) / 3
        ts = [r * math.cos(theta - 2 * math.pi * k / 3) for k in range(3)]
    else:
        sq = math.sqrt(max(disc, 0.0))
        u = np.cbrt(-q / 2 + sq)
        v = np.cbrt(-q / 2 - sq)
        ts = [float(u + v)]
    roots = [_newton(t - shift, c3, c2, c1, c0) for t in ts]
    return sorted(roots)


def _newton(x: float, c3, c2, c1, c0, steps: int = 3) -> float:
    for _ in range(steps):
        f = ((c3 * x + c2) * x + c1) * x + c0
        df = (3 * c3 * x + 2 * c2) * x + c1
        if df == 0:
            break
        nx = x - f / df
        if abs(f_at(nx, c3, c2, c1, c0)) >= abs(f):
            break
        x = nx
    return x


def f_at(x, c3, c2, c1, c0):
    return ((c3 * x + c2) * x + c1) * x + c0


@dataclass(frozen=True)
class Alpha0Solution:
    roots: tuple[float, ...]
    feasible: tuple[float, ...]
    primary: float | None


def solve_alpha0(problem: CubicProblem, expect_unique: bool = False, tol: float = 1e-9) -> Alpha0Solution:
    """All real roots, those in ``[0, 1]``, and the primary root.

    The primary root is the feasible one where the derivative crosses from
    negative to positive (a minimum of the fairness measure); with several,
    the one with the lowest fairness value is taken.
    """
    if problem.degenerate:
        raise DegenerateProblemError("stationarity condition is identically zero (flat fairness)")
    roots = cubic_roots(*problem.coeffs)
    feasible = []
    for r in roots:
        if -tol <= r <= 1 + tol:
            feasible.append(min(max(r, 0.0), 1.0))
    if expect_unique and len(feasible) != 1:
        raise InternalConsistencyError(f"expected exactly one root in [0, 1], got {feasible} from {roots}")
    primary = None
    if feasible:
        fp = problem.params
        measure = fairness.fairness_R if problem.form == "standard" else fairness.fairness_R_exact
        lams = [alpha0_to_lambda(a, fp.b, fp.rho) for a in feasible]
        primary = feasible[int(np.argmin([measure(lam, fp) for lam in lams]))]
    return Alpha0Solution(tuple(roots), tuple(feasible), primary)


def bisect_root(f: Callable[[float], float], lo: float = 0.0, hi: float = 1.0, tol: float = 1e-14) -> float:
    """Plain bisection for a sign change of ``f`` on ``[lo, hi]``."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise ValueError("no sign change on the bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def alpha0_to_lambda(alpha0, b: float, rho: float):
    alpha0 = np.asarray(alpha0, dtype=np.float64)
    out = 2 * rho * alpha0 / ((1 - alpha0) * b + rho * alpha0)
    return float(out) if out.ndim == 0 else out


def lambda_to_alpha0(lam, b: float, rho: float):
    return fairness.alpha0(lam, b, rho)


def optimal_lambda(fp: fairness.FairnessParams, form: str = "standard") -> float:
    sol = solve_alpha0(expand_cubic(fp, form))
    if sol.primary is None:
        raise InternalConsistencyError("no stationary point in [0, 1]")
    return alpha0_to_lambda(sol.primary, fp.b, fp.rho)


@dataclass
class JointResult:
    t_star: int
    lambda_star: float
    h_star: float
    r_star: float
    trace: list[dict] = field(default_factory=list)
    cubic_solves: int = 0


def joint_search(bp: bounds.BoundParams, fp: fairness.FairnessParams, t_max: int,
                 form: str = "standard") -> JointResult:
    """Minimize ``h(T, lam)`` with ``lam`` tied to the fairness stationary point.

    For each ``T`` in ``1..t_max`` the aggregate noise variance is recalibrated
    for a ``T``-round budget, the cubic is solved once and ``h`` is evaluated
    at every feasible root; the trace carries one row per candidate.
    """
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    trace = []
    best = None
    solves = 0
    for t in range(1, t_max + 1):
        cal = dp.calibrate(bp.delta_s, t, bp.n, bp.epsilon, bp.delta)
        fpt = fp.with_sigma_z2(cal.sigma_z2)
        sol = solve_alpha0(expand_cubic(fpt, form))
        solves += 1
        for a in sol.feasible:
            lam = alpha0_to_lambda(a, fp.b, fp.rho)
            hv = bounds.h(bp.at_lambda(lam), t)
            r = fairness.fairness_R(lam, fpt) if form == "standard" else fairness.fairness_R_exact(lam, fpt)
            trace.append({"T": t, "lambda": lam, "h": hv, "R": float(r), "sigma_z2": cal.sigma_z2})
            if not math.isfinite(hv):
                raise NumericalError(f"h is not finite at T={t}, lambda={lam}")
            if best is None or hv < best[2]:
                best = (t, lam, hv, float(r))
    if best is None:
        raise InternalConsistencyError("no feasible stationary point for any T")
    return JointResult(*best, trace=trace, cubic_solves=solves)


@dataclass
class AlternatingResult:
    t_star: int
    lambda_star: float
    objective: float
    sweeps: int
    trace: list[dict] = field(default_factory=list)


def empirical_alternating_search(runner: Callable[[int, float], float], t_grid: Sequence[int],
                                 lambda_grid: Sequence[float] = LAMBDA_GRID,
                                 t0: int | None = None, lam0: float | None = None,
                                 max_sweeps: int = 50) -> AlternatingResult:
    """Coordinate descent over ``t_grid`` x ``lambda_grid``.

    A sweep picks the best ``T`` for the current ``lam``, then the best
    ``lam`` for that ``T``; it stops after a sweep that changes neither.
    Ties keep the current value.  Objective values are cached, and the trace
    lists every distinct evaluation in order.
    """
    t_grid = list(t_grid)
    lambda_grid = list(lambda_grid)
    if not t_grid or not lambda_grid:
        raise ValueError("grids must be non-empty")
    cache: dict[tuple[int, float], float] = {}
    trace: list[dict] = []

    def evaluate(t, lam):
        key = (t, lam)
        if key not in cache:
            v = float(runner(t, lam))
            trace.append({"T": t, "lambda": lam, "objective": v})
            if not math.isfinite(v):
                err = NumericalError(f"objective is not finite at T={t}, lambda={lam}")
                err.trace = trace
                raise err
            cache[key] = v
        return cache[key]

    def best_of(candidates, current, score):
        best, best_v = current, score(current)
        for c in candidates:
            v = score(c)
            if v < best_v:
                best, best_v = c, v
        return best

    t = t_grid[0] if t0 is None else t0
    lam = lambda_grid[0] if lam0 is None else lam0
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        new_t = best_of(t_grid, t, lambda x: evaluate(x, lam))
        new_lam = best_of(lambda_grid, lam, lambda x: evaluate(new_t, x))
        changed = (new_t, new_lam) != (t, lam)
        t, lam = new_t, new_lam
        if not changed:
            break
    return AlternatingResult(t, lam, cache[(t, lam)], sweeps, trace)
