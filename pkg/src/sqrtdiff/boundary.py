"""Feller-type classification of the boundary at zero.

The scale function

    p_c(x) = int_c^x exp( -2 int_c^y (a(z) - b(z) z) / (gamma(z)^2 z^(2 alpha)) dz ) dy

decides attainability of the origin: p_c(x) -> -infinity as x -> 0 means
the origin is unattainable from a positive start.  The classifier first
tries the sufficient integral conditions (cheap and robust near the
threshold), then falls back to a numeric limit test of p_c on a dyadic
grid.  Conclusions do not depend on the choice of c, which the test suite
exercises directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from .errors import QuadratureFailure
from .model import CoefficientSet, integrability_at_zero

__all__ = [
    "BoundaryReport",
    "ScaleFunction",
    "scale_function",
    "classify_zero_boundary",
    "estimate_l_star",
    "lamperti",
]

_DIVERGENCE_THRESHOLD = 1e6
_DIVERGENCE_GROWTH = 1.5
_CONVERGENCE_RATIO = 0.995
_N_DYADIC = 40


class ScaleFunction:
    """Scale-function evaluator with a cached inner integral.

    The inner integral is accumulated over eighth-octave log-spaced panels
    (refining toward zero, where the integrand carries the z^(-2 alpha)
    singularity) and interpolated monotone-safely in log state; the outer
    integral runs adaptive quadrature against the interpolant.
    """

    def __init__(self, c: CoefficientSet, cpoint: float = 1.0, *,
                 z_min: float = 2.0 ** -45, z_max: float = 64.0):
        if cpoint <= 0:
            raise ValueError("cpoint must be > 0")
        self.c = c
        self.cpoint = float(cpoint)
        self._z_min = min(z_min, cpoint / 2)
        self._z_max = max(z_max, 2 * cpoint)
        self._build_inner_cache()

    def _integrand(self, z: float) -> float:
        g2 = float(self.c.gamma(z)) ** 2
        val = (float(self.c.a(z)) - float(self.c.b(z)) * z) / (g2 * z ** (2 * self.c.alpha))
        if not math.isfinite(val):
            raise QuadratureFailure(f"inner integrand non-finite at z={z}", interval=(z, z))
        return val

    def _build_inner_cache(self) -> None:
        # Knots c * 2^(j/8) spanning [z_min, z_max].
        lo_steps = int(math.ceil(8 * math.log2(self.cpoint / self._z_min)))
        hi_steps = int(math.ceil(8 * math.log2(self._z_max / self.cpoint)))
        exps = np.arange(-lo_steps, hi_steps + 1) / 8.0
        knots = self.cpoint * 2.0 ** exps
        H = np.empty_like(knots)
        i0 = lo_steps  # index of the knot at cpoint
        H[i0] = 0.0
        for i in range(i0 + 1, len(knots)):
            seg, _ = quad(self._integrand, knots[i - 1], knots[i],
                          epsabs=1e-10, epsrel=1e-8, limit=200)
            H[i] = H[i - 1] + seg
        for i in range(i0 - 1, -1, -1):
            seg, _ = quad(self._integrand, knots[i], knots[i + 1],
                          epsabs=1e-10, epsrel=1e-8, limit=200)
            H[i] = H[i + 1] - seg
        self._knots = knots
        self._log_knots = np.log(knots)
        self._H = PchipInterpolator(self._log_knots, H, extrapolate=True)

    def inner(self, y: float) -> float:
        """Cumulative inner integral from cpoint to y."""
        if y <= 0:
            raise ValueError("inner integral defined for y > 0")
        return float(self._H(math.log(y)))

    def _outer_integrand(self, y: float) -> float:
        e = -2.0 * self.inner(y)
        if e > 700.0:  # overflow guard; magnitude is all the limit test needs
            return math.exp(700.0)
        return math.exp(e)

    def __call__(self, x: float) -> float:
        """p_c(x); negative for x < cpoint, zero at cpoint."""
        if x <= 0:
            raise ValueError("scale function defined for x > 0")
        if x == self.cpoint:
            return 0.0
        lo, hi = min(x, self.cpoint), max(x, self.cpoint)
        total = 0.0
        # Integrate over the cached panel structure for robustness near 0.
        cuts = [lo] + [float(k) for k in self._knots if lo < k < hi] + [hi]
        for a_, b_ in zip(cuts[:-1], cuts[1:]):
            seg, _ = quad(self._outer_integrand, a_, b_,
                          epsabs=1e-12, epsrel=1e-9, limit=200)
            total += seg
        return total if x > self.cpoint else -total

    def dyadic_profile(self, n: int = _N_DYADIC, *, stop_at: float = 1e12) -> list:
        """p_c at x_j = cpoint 2^-j, j = 1..n, accumulated incrementally.

        Stops early once |p_c| passes ``stop_at`` (the limit is then settled).
        """
        samples = []
        acc = 0.0
        prev = self.cpoint
        for j in range(1, n + 1):
            xj = self.cpoint * 2.0 ** -j
            seg, _ = quad(self._outer_integrand, xj, prev,
                          epsabs=1e-12, epsrel=1e-9, limit=200)
            acc -= seg
            samples.append((xj, acc))
            prev = xj
            if abs(acc) > stop_at:
                break
        return samples


def scale_function(c: CoefficientSet, cpoint: float, x: float) -> float:
    """One-shot p_c(x) (see :class:`ScaleFunction` for repeated evaluation)."""
    return ScaleFunction(c, cpoint)(x)


@dataclass
class BoundaryReport:
    """Outcome of the zero-boundary classification with its evidence."""

    classification: str  # "unattainable" | "attainable" | "inconclusive"
    rule: str            # which decision rule fired
    scale_samples: list = field(default_factory=list)  # (x, p_c(x)) pairs
    l_star: float | None = None
    l_star_samples: list = field(default_factory=list)
    l_star_stable: bool = False
    conditions: dict = field(default_factory=dict)
    cpoint: float = 1.0
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "classification": self.classification,
            "rule": self.rule,
            "cpoint": self.cpoint,
            "l_star": self.l_star,
            "l_star_stable": self.l_star_stable,
            "scale_samples": [[x, v] for x, v in self.scale_samples],
            "conditions": self.conditions,
            "notes": list(self.notes),
        }


def estimate_l_star(c: CoefficientSet, *, x_start: float = 1.0,
                    n_points: int = 41) -> tuple[float, list, bool]:
    """Running infimum of 2 a(x) / gamma(x)^2 on the dyadic grid toward 0.

    Returns (estimate, samples, stable) where ``stable`` records whether the
    running infimum moved by less than 1e-6 relative over the last 10 points.
    """
    xs = [x_start * 2.0 ** -j for j in range(n_points)]
    vals = [2.0 * float(c.a(x)) / float(c.gamma(x)) ** 2 for x in xs]
    running = np.minimum.accumulate(vals)
    tail = running[-10:]
    stable = bool(np.max(tail) - np.min(tail) <= 1e-6 * max(1.0, abs(float(tail[-1]))))
    return float(running[-1]), list(zip(xs, vals)), stable


def lamperti(x, alpha: float, gamma_sup: float):
    """Noise-normalizing state change: phi(x) = x^(1-alpha) / (gamma_sup (1-alpha)).

    Strictly increasing with phi(0) = 0 and phi'(x) = 1 / (gamma_sup x^alpha).
    """
    if gamma_sup <= 0:
        raise ValueError("gamma_sup must be > 0")
    if not 0.5 <= alpha < 1:
        raise ValueError("alpha must lie in [0.5, 1)")
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0):
        raise ValueError("x must be >= 0")
    val = x_arr ** (1 - alpha) / (gamma_sup * (1 - alpha))
    return float(val) if np.isscalar(x) else val


def _scale_limit_verdict(samples: list) -> tuple[str, str]:
    """Classify the dyadic p_c profile: diverging, converging, or undecided."""
    if not samples:
        return "inconclusive", "no profile"
    vals = [abs(v) for _, v in samples]
    if vals[-1] > 1e12:
        return "divergent", "magnitude beyond hard threshold"
    if vals[-1] > _DIVERGENCE_THRESHOLD and len(vals) >= 6:
        last = vals[-6:]
        if all(last[i + 1] >= _DIVERGENCE_GROWTH * last[i] for i in range(5)):
            return "divergent", "magnitude and growth thresholds met"
    if len(samples) >= 11 and vals[-1] <= _DIVERGENCE_THRESHOLD:
        incr = [abs(samples[i + 1][1] - samples[i][1])
                for i in range(len(samples) - 11, len(samples) - 1)]
        if all(x == 0.0 for x in incr):
            return "convergent", "increments vanished"
        if all(x > 0 for x in incr) and \
                all(b <= _CONVERGENCE_RATIO * a for a, b in zip(incr[:-1], incr[1:])):
            return "convergent", "increments decay geometrically"
    return "inconclusive", "neither limit rule fired"


def classify_zero_boundary(c: CoefficientSet, *, cpoint: float = 1.0) -> BoundaryReport:
    """Classify the boundary at 0 for a coefficient set satisfying the base conditions.

    Route depends on alpha: for alpha > 1/2 the weighted integrability of
    1/(gamma^2 z^(2 alpha - 1)) together with a(0) > 0 is sufficient for an
    unattainable origin; for alpha = 1/2 integrability of 1/gamma^2 plus the
    unit lower bound on 2a/gamma^2 near 0 is.  When the sufficient
    conditions do not settle it, the dyadic scale-function limit test takes
    over; near-threshold models remain honestly inconclusive.
    """
    report = BoundaryReport(classification="inconclusive", rule="scale-limit", cpoint=cpoint)

    if c.alpha > 0.5:
        a0 = float(c.a(0.0))
        verdict, detail = integrability_at_zero(
            lambda z: 1.0 / (float(c.gamma(z)) ** 2 * z ** (2 * c.alpha - 1)))
        report.conditions["weighted_inv_diffusion_integrable"] = verdict
        report.conditions["a0_positive"] = a0 > 0
        if a0 > 0 and verdict == "convergent":
            report.classification = "unattainable"
            report.rule = "weighted-integrability"
            return report
        report.notes.append("sufficient condition not established; using scale limit")
    else:
        l_star, samples, stable = estimate_l_star(c)
        report.l_star, report.l_star_samples, report.l_star_stable = l_star, samples, stable
        verdict, _ = integrability_at_zero(lambda z: 1.0 / float(c.gamma(z)) ** 2)
        report.conditions["inv_sq_diffusion_integrable"] = verdict
        ratio_ok = all(v >= 1.0 - 1e-12 for _, v in samples)
        report.conditions["unit_ratio_near_zero"] = ratio_ok
        if verdict == "convergent" and ratio_ok:
            report.classification = "unattainable"
            report.rule = "feller-constant" if c.is_constant else "unit-ratio-integrability"
            return report
        report.notes.append("sufficient condition not established; using scale limit")

    scale = ScaleFunction(c, cpoint)
    samples = scale.dyadic_profile()
    report.scale_samples = samples
    verdict, why = _scale_limit_verdict(samples)
    report.rule = "scale-limit"
    report.notes.append(why)
    if verdict == "divergent":
        report.classification = "unattainable"
    elif verdict == "convergent":
        report.classification = "attainable"
    else:
        report.classification = "inconclusive"
    return report
