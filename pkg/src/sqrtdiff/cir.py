"""Analytic oracle for the constant-coefficient CIR process.

For dX = (a - b X) dt + gamma sqrt(X) dW with constants a, gamma > 0, the
scaled state X_t / L_t follows a noncentral chi-square law with

    L_t    = (1 - exp(-b t)) gamma^2 / (4 b)        (gamma^2 t / 4 at b = 0)
    delta  = 4 a / gamma^2                           degrees of freedom
    zeta_t = 4 x b / (gamma^2 (exp(b t) - 1))        (4 x / (gamma^2 t) at b = 0)

which gives the transition density, the first two moments in closed form,
and an exact transition sampler.  The density is evaluated two independent
ways — the Poisson-weighted chi-square series and the scaled modified
Bessel closed form — so each can audit the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ive

from .errors import SeriesNotConverged

__all__ = [
    "CIRParams",
    "DensityPoint",
    "cir_params",
    "ncx2_pdf",
    "cir_density",
    "cir_mean_var",
    "cir_exact_sample",
    "sample_scaled_ncx2",
]

_SERIES_RTOL = 1e-16
_SERIES_CAP = 10_000


@dataclass(frozen=True)
class CIRParams:
    """Constant CIR coefficients with start state and horizon, plus the derived law."""

    a: float
    b: float
    gamma: float
    x: float
    t: float
    L_t: float
    delta: float
    zeta_t: float


def cir_params(a: float, b: float, gamma: float, x: float, t: float) -> CIRParams:
    """Derive (L_t, delta, zeta_t); b = 0 is handled by its analytic limit."""
    if a <= 0 or gamma <= 0:
        raise ValueError("need a > 0 and gamma > 0")
    if t <= 0:
        raise ValueError("need t > 0")
    if x < 0:
        raise ValueError("need x >= 0")
    delta = 4.0 * a / gamma ** 2
    if b == 0.0:
        L = gamma ** 2 * t / 4.0
        zeta = 4.0 * x / (gamma ** 2 * t)
    else:
        # expm1 keeps both stable for |b t| << 1.
        L = gamma ** 2 * (-math.expm1(-b * t)) / (4.0 * b)
        zeta = 4.0 * x * b / (gamma ** 2 * math.expm1(b * t))
    return CIRParams(a=a, b=b, gamma=gamma, x=x, t=t, L_t=L, delta=delta, zeta_t=zeta)


@dataclass(frozen=True)
class DensityPoint:
    y: float
    pdf: float
    series_terms_used: int
    method: str  # "series" | "bessel"


def _log_central_chi2(z: float, df: float) -> float:
    return (0.5 * df - 1.0) * math.log(z) - 0.5 * z - 0.5 * df * math.log(2.0) - gammaln(0.5 * df)


def _ncx2_series(z: float, delta: float, zeta: float) -> tuple[float, int]:
    """Poisson-mixture series for the noncentral chi-square density at z > 0.

    Terms are exp of  -zeta/2 + n log(zeta/2) - lgamma(n+1) + log chi2_{delta+2n}(z).
    Summation starts near the largest term and proceeds outward in both
    directions, so early-term underflow at large zeta cannot zero the sum;
    it stops once the running term falls below 1e-16 of the partial sum
    while decreasing, with a hard cap of 10000 terms.
    """
    if zeta == 0.0:
        return math.exp(_log_central_chi2(z, delta)), 1
    log_half_zeta = math.log(0.5 * zeta)

    def log_term(n: int) -> float:
        return (-0.5 * zeta + n * log_half_zeta - gammaln(n + 1)
                + _log_central_chi2(z, delta + 2 * n))

    # Index of the largest term: ratio T_{n+1}/T_n = (zeta z / 4) / ((n+1)(delta/2+n)).
    peak = 0.5 * math.sqrt(zeta * z) - 0.25 * delta
    n0 = max(0, int(peak))
    total = 0.0
    used = 0

    # Upward sweep from the peak.
    prev = math.inf
    n = n0
    while used < _SERIES_CAP:
        t = math.exp(log_term(n))
        total += t
        used += 1
        if t < prev and t <= _SERIES_RTOL * total:
            break
        prev = t
        n += 1
    else:
        raise SeriesNotConverged(f"series cap {_SERIES_CAP} hit at z={z}, delta={delta}, zeta={zeta}")

    # Downward sweep below the peak (terms decay monotonically there).
    n = n0 - 1
    while n >= 0 and used < _SERIES_CAP:
        t = math.exp(log_term(n))
        total += t
        used += 1
        if t <= _SERIES_RTOL * total:
            break
        n -= 1
    return total, used


def _ncx2_bessel(z: float, delta: float, zeta: float) -> float:
    """Closed form via the exponentially scaled modified Bessel function.

    f(z) = 1/2 exp(-(z+zeta)/2 + sqrt(zeta z)) (z/zeta)^((delta/2-1)/2) I~,
    where I~ is the scaled Bessel I_(delta/2-1)(sqrt(zeta z)).
    """
    if zeta == 0.0:
        return math.exp(_log_central_chi2(z, delta))
    nu = 0.5 * delta - 1.0
    w = math.sqrt(zeta * z)
    scaled = float(ive(nu, w))
    if scaled <= 0.0:
        return 0.0
    log_val = (math.log(0.5) - 0.5 * (z + zeta) + w
               + 0.5 * nu * (math.log(z) - math.log(zeta)) + math.log(scaled))
    return math.exp(log_val)


def ncx2_pdf(z, delta: float, zeta: float, method: str = "series"):
    """Noncentral chi-square density at z > 0 (vectorized over z)."""
    if delta <= 0:
        raise ValueError("delta must be > 0")
    if zeta < 0:
        raise ValueError("zeta must be >= 0")
    if method not in ("series", "bessel"):
        raise ValueError(f"unknown method {method!r}")
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr <= 0):
        raise ValueError("z must be > 0")
    fn = (lambda zz: _ncx2_series(zz, delta, zeta)[0]) if method == "series" \
        else (lambda zz: _ncx2_bessel(zz, delta, zeta))
    out = np.array([fn(float(zz)) for zz in np.atleast_1d(z_arr)])
    return float(out[0]) if z_arr.ndim == 0 else out


def cir_density(p: CIRParams, y, method: str = "series"):
    """Transition density of X_t at y > 0: ncx2 at y/L_t scaled by 1/L_t.

    Diverges like y^(delta/2 - 1) as y -> 0 when delta < 2.  Scalar y gives
    a DensityPoint; array y gives the pdf array.
    """
    if np.isscalar(y):
        if y <= 0:
            raise ValueError("y must be > 0")
        z = y / p.L_t
        if method == "series":
            val, used = _ncx2_series(z, p.delta, p.zeta_t)
        else:
            val, used = _ncx2_bessel(z, p.delta, p.zeta_t), 0
        return DensityPoint(y=float(y), pdf=val / p.L_t, series_terms_used=used, method=method)
    y_arr = np.asarray(y, dtype=float)
    return ncx2_pdf(y_arr / p.L_t, p.delta, p.zeta_t, method=method) / p.L_t


def cir_pdf(p: CIRParams, y, method: str = "series"):
    """Density values only (vectorized convenience over :func:`cir_density`)."""
    if np.isscalar(y):
        return cir_density(p, y, method=method).pdf
    return cir_density(p, y, method=method)


def cir_mean_var(p: CIRParams) -> tuple[float, float]:
    """Closed-form mean and variance of X_t (first/second moment equations)."""
    a, b, g, x, t = p.a, p.b, p.gamma, p.x, p.t
    if b == 0.0:
        return x + a * t, x * g ** 2 * t + 0.5 * a * g ** 2 * t ** 2
    eb = math.exp(-b * t)
    one_m = -math.expm1(-b * t)  # 1 - e^{-bt}
    mean = x * eb + (a / b) * one_m
    var = x * (g ** 2 / b) * (eb - eb ** 2) + (a * g ** 2 / (2 * b ** 2)) * one_m ** 2
    return mean, var


def sample_scaled_ncx2(rng: np.random.Generator, delta: float, zeta: float, n: int) -> np.ndarray:
    """n exact noncentral chi-square variates.

    delta > 1 uses the decomposition chi2_(delta-1) + (N + sqrt(zeta))^2;
    delta <= 1 uses the Poisson mixture chi2_(delta + 2 K), K ~ Poisson(zeta/2).
    Both are exact, so the sampler carries no discretization bias.
    """
    if delta > 1.0:
        chi = rng.chisquare(delta - 1.0, size=n)
        z = rng.standard_normal(n)
        return chi + (z + math.sqrt(zeta)) ** 2
    k = rng.poisson(0.5 * zeta, size=n)
    return rng.chisquare(delta + 2.0 * k)


def cir_exact_sample(p: CIRParams, seed: int, n: int = 1):
    """Exact draw(s) of X_t: L_t times a noncentral chi-square variate.

    Deterministic for a fixed seed.  Returns a scalar for n = 1, else an
    array of n independent draws.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    out = p.L_t * sample_scaled_ncx2(rng, p.delta, p.zeta_t, n)
    return float(out[0]) if n == 1 else out
