"""Coefficient models for one-dimensional square-root-type diffusions.

The state equation is

    dX = (a(X) - b(X) X) dt + gamma(X) X^alpha dW,    X_0 = x >= 0,

with alpha in [1/2, 1).  This module holds the coefficient triple,
evaluates the composite drift a(x) - b(x) x and diffusion gamma(x) x^alpha,
computes derivative sup-norms over balls (the raw material of the constant
calculus in :mod:`sqrtdiff.bounds`), and checks the growth, ellipticity and
integrability conditions that the bound evaluators and the boundary
classifier rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .errors import (BallTouchesSingularity, MissingDerivatives, MissingNorm,
                     NonFinite, QuadratureFailure)

__all__ = [
    "CoefficientSet",
    "NormTable",
    "GrowthProfile",
    "ConditionResult",
    "GrowthReport",
    "eval_coefficients",
    "drift_derivative",
    "diffusion_derivative",
    "local_norms",
    "global_norms",
    "check_growth",
    "integrability_at_zero",
]

# Central finite-difference stencils of 4th-order accuracy:
# order -> (offsets, weights, power of h in the denominator).
_FD_STENCILS = {
    1: ((-2, -1, 1, 2), (1 / 12, -8 / 12, 8 / 12, -1 / 12), 1),
    2: ((-2, -1, 0, 1, 2), (-1 / 12, 16 / 12, -30 / 12, 16 / 12, -1 / 12), 2),
    3: ((-3, -2, -1, 1, 2, 3), (1 / 8, -1.0, 13 / 8, -13 / 8, 1.0, -1 / 8), 3),
    4: ((-3, -2, -1, 0, 1, 2, 3), (-1 / 6, 2.0, -13 / 2, 28 / 3, -13 / 2, 2.0, -1 / 6), 4),
}
MAX_FD_ORDER = max(_FD_STENCILS)

# Per-order default steps.  A single tiny step is unusable beyond first
# derivatives (round-off grows like eps / h^order), so the step widens
# with the order while staying well inside the truncation budget of the
# 4th-order stencils.
_FD_BASE_STEP = {1: 1e-5, 2: 1e-4, 3: 1e-3, 4: 5e-3}

_SUP_GRID_POINTS = 2048  # equispaced evaluations per ball (endpoints included)


def _falling(alpha: float, n: int) -> float:
    """alpha (alpha-1) ... (alpha-n+1);  1 for n = 0."""
    out = 1.0
    for i in range(n):
        out *= alpha - i
    return out


@dataclass(frozen=True)
class CoefficientSet:
    """Coefficient triple (a, b, gamma) with exponent alpha and singularity radius eta.

    ``a``, ``b``, ``gamma`` are scalar callables of the state.  Analytic
    derivative closures are optional; ``a_derivs[j-1]`` is the j-th
    derivative of ``a`` and likewise for ``b`` and ``gamma``.  When absent,
    derivative evaluations fall back to central finite differences on the
    composite drift/diffusion functions (orders 1..4).
    """

    a: Callable[[float], float]
    b: Callable[[float], float]
    gamma: Callable[[float], float]
    alpha: float
    eta: float = 0.0
    a_derivs: tuple = ()
    b_derivs: tuple = ()
    gamma_derivs: tuple = ()
    family: str = "user-defined"

    def __post_init__(self):
        if not 0.5 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0.5, 1), got {self.alpha}")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        a0 = float(self.a(0.0))
        if not math.isfinite(a0) or a0 < 0:
            raise ValueError(f"a(0) must be finite and >= 0, got {a0}")

    @classmethod
    def constant(cls, a: float, b: float, gamma: float, alpha: float = 0.5,
                 n_derivs: int = 12) -> "CoefficientSet":
        """Constant coefficient family; all derivative closures of order >= 1 are zero."""
        if a < 0:
            raise ValueError("constant family requires a >= 0")
        if gamma == 0.0:
            raise ValueError("constant family requires gamma != 0")
        zero = tuple(lambda x: 0.0 for _ in range(n_derivs))
        return cls(
            a=lambda x, _v=float(a): _v,
            b=lambda x, _v=float(b): _v,
            gamma=lambda x, _v=float(gamma): _v,
            alpha=alpha,
            eta=0.0,
            a_derivs=zero,
            b_derivs=zero,
            gamma_derivs=zero,
            family="constant",
        )

    @classmethod
    def tabulated(cls, knots: Sequence[float], a_values: Sequence[float],
                  b_values: Sequence[float], gamma_values: Sequence[float],
                  alpha: float = 0.5, eta: float = 0.0) -> "CoefficientSet":
        """Cubic-spline coefficients through knot arrays (natural extrapolation)."""
        knots = np.asarray(knots, dtype=float)
        if knots.ndim != 1 or knots.size < 4:
            raise ValueError("tabulated family needs at least 4 knots")
        splines = [CubicSpline(knots, np.asarray(v, dtype=float))
                   for v in (a_values, b_values, gamma_values)]
        derivs = [tuple(s.derivative(j) for j in range(1, 4)) for s in splines]
        return cls(
            a=splines[0], b=splines[1], gamma=splines[2],
            alpha=alpha, eta=eta,
            a_derivs=derivs[0], b_derivs=derivs[1], gamma_derivs=derivs[2],
            family="tabulated",
        )

    @property
    def is_constant(self) -> bool:
        return self.family == "constant"

    def constant_values(self) -> tuple[float, float, float]:
        """(a, b, gamma) for the constant family."""
        if not self.is_constant:
            raise ValueError("constant_values is only defined for the constant family")
        return float(self.a(1.0)), float(self.b(1.0)), float(self.gamma(1.0))


def eval_coefficients(c: CoefficientSet, x: float) -> tuple[float, float]:
    """Drift a(x) - b(x) x and diffusion gamma(x) x^alpha at state x >= 0."""
    if x < 0:
        raise ValueError(f"state must be >= 0, got {x}")
    drift = float(c.a(x)) - float(c.b(x)) * x
    diffusion = float(c.gamma(x)) * x ** c.alpha
    if not (math.isfinite(drift) and math.isfinite(diffusion)):
        raise NonFinite(f"coefficients non-finite at x={x}: drift={drift}, diffusion={diffusion}")
    return drift, diffusion


def _closure(derivs: tuple, fn: Callable, order: int):
    """Derivative closure of a base coefficient: order 0 is the function itself."""
    if order == 0:
        return fn
    if order <= len(derivs):
        return derivs[order - 1]
    return None


def _fd(f: Callable[[float], float], x: float, order: int, step: float | None) -> float:
    if order > MAX_FD_ORDER:
        raise MissingDerivatives(
            f"finite differencing supports orders <= {MAX_FD_ORDER}, got {order}; "
            "supply analytic derivative closures")
    h = step if step is not None else max(_FD_BASE_STEP[order], _FD_BASE_STEP[order] * abs(x))
    offsets, weights, pw = _FD_STENCILS[order]
    acc = 0.0
    for o, w in zip(offsets, weights):
        acc += w * f(x + o * h)
    return acc / h ** pw


def drift_derivative(c: CoefficientSet, x: float, order: int, *,
                     allow_fd: bool = True, fd_step: float | None = None) -> float:
    """Order-j derivative of the composite drift a(x) - b(x) x.

    Uses analytic closures when available:  (b(x) x)^(j) = x b^(j) + j b^(j-1).
    """
    if order == 0:
        return float(c.a(x)) - float(c.b(x)) * x
    a_j = _closure(c.a_derivs, c.a, order)
    b_j = _closure(c.b_derivs, c.b, order)
    b_jm1 = _closure(c.b_derivs, c.b, order - 1)
    if a_j is not None and b_j is not None and b_jm1 is not None:
        return float(a_j(x)) - (x * float(b_j(x)) + order * float(b_jm1(x)))
    if not allow_fd:
        raise MissingDerivatives(f"no analytic closures for drift order {order}")
    return _fd(lambda u: float(c.a(u)) - float(c.b(u)) * u, x, order, fd_step)


def diffusion_derivative(c: CoefficientSet, x: float, order: int, *,
                         allow_fd: bool = True, fd_step: float | None = None) -> float:
    """Order-j derivative of the composite diffusion gamma(x) x^alpha (x > 0 for j >= 1).

    Leibniz with the closed-form derivatives of x^alpha:
    (gamma x^alpha)^(j) = sum_i C(j,i) gamma^(i)(x) alpha^(falling j-i) x^(alpha-j+i).
    """
    if order == 0:
        return float(c.gamma(x)) * x ** c.alpha
    have_all = all(_closure(c.gamma_derivs, c.gamma, i) is not None for i in range(order + 1))
    if have_all:
        acc = 0.0
        for i in range(order + 1):
            g_i = float(_closure(c.gamma_derivs, c.gamma, i)(x))
            n = order - i
            acc += math.comb(order, i) * g_i * _falling(c.alpha, n) * x ** (c.alpha - n)
        return acc
    if not allow_fd:
        raise MissingDerivatives(f"no analytic closures for diffusion order {order}")
    return _fd(lambda u: float(c.gamma(u)) * u ** c.alpha, x, order, fd_step)


@dataclass(frozen=True)
class GrowthProfile:
    """Declared polynomial growth/ellipticity profile of a coefficient set.

    ``q``: growth exponent of coefficient derivatives; ``q_bar``: ellipticity
    decay exponent; ``c0`` in (0, 1): ellipticity constant; ``c_growth``:
    constant multiplying (1 + |y|^q) in the derivative growth bound.
    """

    q: float = 1.0
    q_bar: float = 0.0
    c0: float = 0.5
    c_growth: float = 10.0

    def __post_init__(self):
        if self.q < 0 or self.q_bar < 0:
            raise ValueError("growth exponents must be >= 0")
        if not 0 < self.c0 < 1:
            raise ValueError("c0 must lie in (0, 1)")
        if self.c_growth <= 0:
            raise ValueError("c_growth must be > 0")


@dataclass
class NormTable:
    """Derivative sup-norms of drift/diffusion over balls around ``y0``.

    ``drift[r][k]`` is 1 + sum_{j<=k} sup_{|x-y0|<=r} |drift^(j)(x)| and
    likewise for ``diffusion``; every entry is >= 1 by construction.  Balls
    of radius R, 3R and 5R are tabulated: the 5R entries feed the local
    constant calculus, the ellipticity constant ``c_star`` is the infimum of
    the squared diffusion over the 3R ball (capped just below 1).

    Grid-sampled sups are certified lower bounds only, which
    ``lower_bound_only`` records.
    """

    y0: float
    radius: float
    k_max: int
    drift: dict
    diffusion: dict
    c_star: float
    growth: GrowthProfile = field(default_factory=GrowthProfile)
    lower_bound_only: bool = True

    @property
    def ball_radii(self) -> tuple:
        return tuple(sorted(self.drift))

    def drift_norm(self, k: int, radius: float | None = None) -> float:
        return self._get(self.drift, k, radius)

    def diffusion_norm(self, k: int, radius: float | None = None) -> float:
        return self._get(self.diffusion, k, radius)

    def _get(self, table: dict, k: int, radius: float | None) -> float:
        r = self.radius if radius is None else radius
        key = min(table, key=lambda rr: abs(rr - r))
        if abs(key - r) > 1e-9 * max(1.0, r):
            raise MissingNorm(f"no ball of radius {r} in table (available: {tuple(table)})")
        norms = table[key]
        if k >= len(norms):
            raise MissingNorm(f"norm table holds orders <= {len(norms) - 1}, requested {k}")
        return norms[k]

    @classmethod
    def flat(cls, y0: float = 0.0, radius: float = 1.0, k_max: int = 8,
             value: float = 1.0, c_star: float = 1.0,
             growth: GrowthProfile | None = None) -> "NormTable":
        """Synthetic table with every norm equal to ``value`` (for calibration and tests)."""
        norms = tuple(value for _ in range(k_max + 1))
        radii = {r: norms for r in (radius, 3 * radius, 5 * radius)}
        return cls(y0=y0, radius=radius, k_max=k_max,
                   drift=dict(radii), diffusion=dict(radii), c_star=c_star,
                   growth=growth or GrowthProfile(), lower_bound_only=False)


def _sup_abs_derivative(fn, c, lo: float, hi: float, order: int,
                        allow_fd: bool, fd_step) -> float:
    grid = np.linspace(lo, hi, _SUP_GRID_POINTS)
    best = 0.0
    for x in grid:
        best = max(best, abs(fn(c, float(x), order, allow_fd=allow_fd, fd_step=fd_step)))
    return best


def local_norms(c: CoefficientSet, y0: float, R: float, k_max: int, *,
                allow_fd: bool = True, fd_step: float | None = None,
                growth: GrowthProfile | None = None) -> NormTable:
    """Derivative sup-norm table over the balls of radius R, 3R, 5R around y0.

    Requires 0 < R <= 1 and the 5R ball clear of the singular region
    [0, eta]; sups use 2048 equispaced evaluations per ball including the
    endpoints, with analytic derivative closures when the coefficient set
    supplies them and 4th-order central differences otherwise.
    """
    if not 0 < R <= 1:
        raise ValueError(f"R must lie in (0, 1], got {R}")
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    if y0 - 5 * R <= c.eta:
        raise BallTouchesSingularity(
            f"[{y0 - 5 * R}, {y0 + 5 * R}] meets the singular region [0, {c.eta}]")

    drift_tab: dict = {}
    diff_tab: dict = {}
    for r in (R, 3 * R, 5 * R):
        lo, hi = y0 - r, y0 + r
        d_sups = [_sup_abs_derivative(drift_derivative, c, lo, hi, j, allow_fd, fd_step)
                  for j in range(k_max + 1)]
        s_sups = [_sup_abs_derivative(diffusion_derivative, c, lo, hi, j, allow_fd, fd_step)
                  for j in range(k_max + 1)]
        drift_tab[r] = tuple(1.0 + sum(d_sups[: j + 1]) for j in range(k_max + 1))
        diff_tab[r] = tuple(1.0 + sum(s_sups[: j + 1]) for j in range(k_max + 1))

    grid3 = np.linspace(y0 - 3 * R, y0 + 3 * R, _SUP_GRID_POINTS)
    ell = min(float(c.gamma(x)) ** 2 * x ** (2 * c.alpha) for x in grid3)
    c_star = min(ell, 1.0 - 1e-12)
    if c_star <= 0:
        raise NonFinite(f"diffusion degenerates on the 3R ball around {y0}")

    return NormTable(y0=y0, radius=R, k_max=k_max, drift=drift_tab,
                     diffusion=diff_tab, c_star=c_star,
                     growth=growth or GrowthProfile())


def global_norms(c: CoefficientSet, domain: tuple[float, float], k_max: int, *,
                 n_points: int = 4096, allow_fd: bool = True) -> tuple[tuple, tuple]:
    """Whole-domain analogue of :func:`local_norms` over a finite window.

    Returns (nB, nA): cumulative drift and diffusion norms by order, each
    with the additive 1.  The window stands in for the full half-line; the
    result is a lower bound for coefficients unbounded at infinity.
    """
    lo, hi = domain
    if lo <= c.eta:
        raise BallTouchesSingularity(f"domain [{lo}, {hi}] meets the singular region")
    grid = np.linspace(lo, hi, n_points)
    d_sups, s_sups = [], []
    for j in range(k_max + 1):
        d_sups.append(max(abs(drift_derivative(c, float(x), j, allow_fd=allow_fd)) for x in grid))
        s_sups.append(max(abs(diffusion_derivative(c, float(x), j, allow_fd=allow_fd)) for x in grid))
    nB = tuple(1.0 + sum(d_sups[: j + 1]) for j in range(k_max + 1))
    nA = tuple(1.0 + sum(s_sups[: j + 1]) for j in range(k_max + 1))
    return nB, nA


# ---------------------------------------------------------------------------
# Condition checking
# ---------------------------------------------------------------------------

@dataclass
class ConditionResult:
    condition: str
    status: str  # "pass" | "fail" | "inconclusive"
    witness: tuple | None = None  # (x, value) pinpointing a failure
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status == "fail" and self.witness is None:
            raise ValueError("a failing condition must carry a witness point")


@dataclass
class GrowthReport:
    conditions: dict
    grid: np.ndarray

    def status(self, name: str) -> str:
        return self.conditions[name].status

    def passed(self, name: str) -> bool:
        return self.conditions[name].status == "pass"

    def as_dict(self) -> dict:
        return {
            name: {
                "status": r.status,
                "witness": list(r.witness) if r.witness is not None else None,
                "detail": {k: v for k, v in r.detail.items() if not isinstance(v, np.ndarray)},
            }
            for name, r in self.conditions.items()
        }


def integrability_at_zero(f: Callable[[float], float], *, x0: float = 1.0,
                          n_panels: int = 40) -> tuple[str, dict]:
    """Divergence detection for integral of f over (0, x0].

    Integrates f >= 0 over dyadic panels [x0 2^-(j+1), x0 2^-j] and inspects
    the tail panel ratios: a geometric decay reads convergent, nondecreasing
    panels read divergent, anything in between is inconclusive.  No
    quantitative surrogate exists for the borderline, so the gap is reported
    honestly rather than forced.
    """
    panels = []
    for j in range(n_panels):
        hi = x0 * 2.0 ** (-j)
        lo = hi / 2.0
        try:
            val, _ = quad(f, lo, hi, limit=100)
        except Exception as exc:  # non-finite integrand inside the panel
            raise QuadratureFailure(f"integrand failed on [{lo}, {hi}]: {exc}",
                                    interval=(lo, hi)) from exc
        if not math.isfinite(val):
            return "divergent", {"panels": panels, "nonfinite_at": (lo, hi)}
        panels.append(val)
    tail = [p for p in panels[-11:] if p > 0]
    detail = {"panels": panels, "x0": x0}
    if len(tail) < 5:
        return "convergent", detail  # panels vanish outright
    ratios = [tail[i + 1] / tail[i] for i in range(len(tail) - 1)]
    detail["tail_ratios"] = ratios
    if max(ratios) <= 0.98:
        return "convergent", detail
    if min(ratios) >= 0.995:
        return "divergent", detail
    return "inconclusive", detail


def _geometric_tail_inf(f: Callable[[float], float], x_start: float, *,
                        direction: str, n_points: int = 41) -> tuple[float, list]:
    """Running infimum of f on the geometric grid x_start * 2^(+-j), j = 0..40."""
    xs = [x_start * (2.0 ** j if direction == "up" else 2.0 ** -j) for j in range(n_points)]
    vals = [float(f(x)) for x in xs]
    running = np.minimum.accumulate(vals)
    return float(running[-1]), list(zip(xs, vals))


def check_growth(c: CoefficientSet, table: NormTable, grid) -> GrowthReport:
    """Evaluate the growth/ellipticity/integrability conditions on a state grid.

    The grid must be nonempty, strictly positive and sorted.  Pointwise
    conditions are checked on the grid; liminf-style conditions on geometric
    tail grids with a last-10-point decision rule.  Every failure carries a
    witness point; borderline integrability is reported as inconclusive.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be nonempty, strictly positive and sorted")
    prof = table.growth
    out: dict[str, ConditionResult] = {}

    # The power-law growth/ellipticity envelopes are tail statements; near
    # the origin the derivatives of x^alpha blow up and the zero-boundary
    # conditions below take over, so both are checked from eta + 1 upward.
    tail_floor = c.eta + 1.0

    # Polynomial growth of drift/diffusion derivatives up to the table order.
    worst = None
    k_check = min(table.k_max, MAX_FD_ORDER if not c.a_derivs else table.k_max)
    for k in range(k_check + 1):
        for x in grid:
            x = float(x)
            if x < tail_floor:
                continue
            lhs = abs(drift_derivative(c, x, k)) + abs(diffusion_derivative(c, x, k))
            rhs = prof.c_growth * (1.0 + x ** prof.q)
            margin = lhs - rhs
            if worst is None or margin > worst[2]:
                worst = (x, lhs, margin, k)
    if worst is None:
        out["poly_growth"] = ConditionResult("poly_growth", "inconclusive",
                                             detail={"note": "no grid point in the tail regime"})
    elif worst[2] <= 0:
        out["poly_growth"] = ConditionResult("poly_growth", "pass",
                                             detail={"max_ratio_point": worst[0], "orders": k_check})
    else:
        out["poly_growth"] = ConditionResult("poly_growth", "fail", witness=(worst[0], worst[1]),
                                             detail={"order": worst[3]})

    # Polynomial ellipticity: diffusion(y)^2 >= c0 |y|^(-q_bar) in the tail.
    worst = None
    for x in grid:
        x = float(x)
        if x < tail_floor:
            continue
        lhs = (float(c.gamma(x)) * x ** c.alpha) ** 2
        rhs = prof.c0 * x ** (-prof.q_bar)
        margin = rhs - lhs
        if worst is None or margin > worst[2]:
            worst = (x, lhs, margin)
    if worst is None:
        out["poly_ellipticity"] = ConditionResult("poly_ellipticity", "inconclusive")
    elif worst[2] <= 0:
        out["poly_ellipticity"] = ConditionResult("poly_ellipticity", "pass")
    else:
        out["poly_ellipticity"] = ConditionResult("poly_ellipticity", "fail",
                                                  witness=(worst[0], worst[1]))

    # Integrability of 1/gamma^2 at 0+ (boundary condition, alpha = 1/2 route).
    out["inv_sq_diffusion_integrable"] = _integrability_condition(
        "inv_sq_diffusion_integrable", lambda z: 1.0 / float(c.gamma(z)) ** 2, grid)

    # Integrability of 1/(gamma^2 z^(2 alpha - 1)) at 0+ plus a(0) > 0
    # (boundary condition, alpha > 1/2 route).
    a0 = float(c.a(0.0))
    weighted = _integrability_condition(
        "weighted_inv_diffusion_integrable",
        lambda z: 1.0 / (float(c.gamma(z)) ** 2 * z ** (2 * c.alpha - 1)), grid)
    if a0 <= 0 and weighted.status == "pass":
        weighted = ConditionResult("weighted_inv_diffusion_integrable", "fail",
                                   witness=(0.0, a0), detail={"note": "a(0) must be > 0"})
    weighted.detail["a0"] = a0
    out["weighted_inv_diffusion_integrable"] = weighted

    # Unit lower bound on 2 a / gamma^2 in a right neighborhood of 0.
    ratios = [(float(x), 2.0 * float(c.a(x)) / float(c.gamma(x)) ** 2) for x in grid]
    xbar = None
    for x, r in ratios:
        if r >= 1.0 - 1e-12:
            xbar = x
        else:
            break
    if xbar is not None:
        out["feller_ratio_near_zero"] = ConditionResult(
            "feller_ratio_near_zero", "pass", detail={"x_bar": xbar})
    else:
        x0, r0 = ratios[0]
        out["feller_ratio_near_zero"] = ConditionResult(
            "feller_ratio_near_zero", "fail", witness=(x0, r0))

    # liminf at infinity of b(x) x^(1-alpha) > -infinity, on the geometric
    # tail grid started at the largest grid point.
    threshold = -1e6
    tail_inf, samples = _geometric_tail_inf(
        lambda x: float(c.b(x)) * x ** (1 - c.alpha), float(grid[-1]), direction="up")
    last10 = min(v for _, v in samples[-10:])
    if last10 > threshold and math.isfinite(tail_inf):
        out["drift_tail_bounded_below"] = ConditionResult(
            "drift_tail_bounded_below", "pass", detail={"tail_inf": tail_inf})
    else:
        wx, wv = min(samples[-10:], key=lambda s: s[1])
        out["drift_tail_bounded_below"] = ConditionResult(
            "drift_tail_bounded_below", "fail", witness=(wx, wv),
            detail={"threshold": threshold})

    return GrowthReport(conditions=out, grid=grid)


def _integrability_condition(name: str, f, grid) -> ConditionResult:
    try:
        verdict, detail = integrability_at_zero(f)
    except QuadratureFailure as exc:
        return ConditionResult(name, "fail", witness=(exc.interval[0], math.inf),
                               detail={"error": str(exc)})
    if verdict == "convergent":
        return ConditionResult(name, "pass", detail=detail)
    if verdict == "divergent":
        return ConditionResult(name, "fail", witness=(float(grid[0]), math.inf), detail=detail)
    return ConditionResult(name, "inconclusive", detail=detail)
