"""Numerically stable truncated-Gaussian distribution functions.

Supports two truncation region shapes: the two-sided tail
(-inf, -lam] u [lam, inf) and a finite or half-infinite interval [a, b].
All tail probabilities are computed through the scaled complementary
error function / log-CDF so that masses, conditional moments and CDF
values stay accurate arbitrarily deep in the tails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# log-mass below this is not representable in double precision
LOG_MASS_FLOOR = -740.0


class DegenerateRegion(ValueError):
    """Truncation region whose Gaussian mass underflows double precision."""


def std_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x - _LOG_SQRT_2PI)
    return out if out.ndim else float(out)


def std_cdf(x):
    out = special.ndtr(np.asarray(x, dtype=float))
    return out if out.ndim else float(out)


def std_logcdf(x):
    out = special.log_ndtr(np.asarray(x, dtype=float))
    return out if out.ndim else float(out)


def std_sf(x):
    out = special.ndtr(-np.asarray(x, dtype=float))
    return out if out.ndim else float(out)


def std_quantile(p):
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 0.0) or np.any(p_arr >= 1.0):
        raise ValueError("std_quantile requires 0 < p < 1")
    out = special.ndtri(p_arr)
    return out if out.ndim else float(out)


def _log_mills(x):
    """log of the Mills ratio Phi_bar(x)/phi(x), stable for any finite x."""
    x = np.asarray(x, dtype=float)
    return special.log_ndtr(-x) + 0.5 * x * x + _LOG_SQRT_2PI


def _logdiff(la, lb):
    """log(exp(la) - exp(lb)) for la >= lb."""
    la = np.asarray(la, dtype=float)
    lb = np.asarray(lb, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(np.isneginf(lb), 1.0, -np.expm1(np.minimum(lb - la, 0.0)))
        return la + np.log(np.maximum(d, 0.0))


# ---------------------------------------------------------------------------
# standardized two-sided-tail kernels (sigma = 1, region (-inf,-lam]u[lam,inf))
# ---------------------------------------------------------------------------

def tail_log_mass(m, lam):
    """log P(|Z + m| >= lam) for Z ~ N(0, 1), i.e. mean m, threshold lam."""
    m = np.asarray(m, dtype=float)
    lam = np.asarray(lam, dtype=float)
    return np.logaddexp(special.log_ndtr(-lam - m), special.log_ndtr(m - lam))


def tail_moments(m, lam):
    """Conditional mean shift h and variance of N(m,1) on the two-sided tail.

    Returns (h, var) with E[X | region] = m + h and Var[X | region] = var.
    Uses the symmetry of the region to keep the internal computation at
    nonnegative means, where all exponentials decay.
    """
    m = np.asarray(m, dtype=float)
    lam = np.asarray(lam, dtype=float)
    s = np.where(m < 0, -1.0, 1.0)
    am = np.abs(m)
    c = -2.0 * lam * am  # log phi(alpha)/phi(beta) <= 0
    lr_b = _log_mills(lam - am)
    lr_na = _log_mills(lam + am)
    # Z / phi(beta) = exp(c) * R(-alpha) + R(beta)
    w = np.exp(-np.logaddexp(c + lr_na, lr_b))
    ec = np.exp(c)
    h = -np.expm1(c) * w
    second = 1.0 + ((lam - am) + (lam + am) * ec) * w
    var = np.maximum(second - h * h, 0.0)
    h = s * h
    return (h, var) if h.ndim else (float(h), float(var))


def tail_cdf(zx, m, lam):
    """CDF at standardized point zx of N(m,1) restricted to the two-sided tail."""
    zx = np.asarray(zx, dtype=float)
    m = np.asarray(m, dtype=float)
    lam = np.asarray(lam, dtype=float)
    log_z = tail_log_mass(m, lam)
    low = np.exp(special.log_ndtr(np.minimum(zx, -lam) - m) - log_z)
    high = -np.expm1(np.minimum(special.log_ndtr(m - np.maximum(zx, lam)) - log_z, 0.0))
    out = np.where(zx < lam, low, high)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# standardized interval kernels ([za, zb] already centered and scaled)
# ---------------------------------------------------------------------------

def interval_log_mass(za, zb):
    za = np.asarray(za, dtype=float)
    zb = np.asarray(zb, dtype=float)
    right = _logdiff(special.log_ndtr(-za), special.log_ndtr(-zb))
    left = _logdiff(special.log_ndtr(zb), special.log_ndtr(za))
    with np.errstate(divide="ignore", invalid="ignore"):
        mid = np.log(0.5 * (special.erf(zb / math.sqrt(2.0)) - special.erf(za / math.sqrt(2.0))))
    out = np.select([za > 0, zb < 0], [right, left], default=mid)
    return out if out.ndim else float(out)


def interval_cdf(zx, za, zb):
    zx = np.asarray(zx, dtype=float)
    za = np.asarray(za, dtype=float)
    zb = np.asarray(zb, dtype=float)
    log_z = interval_log_mass(za, zb)
    zc = np.clip(zx, za, zb)
    lo = np.exp(interval_log_mass(za, zc) - log_z)
    hi = -np.expm1(np.minimum(interval_log_mass(zc, zb) - log_z, 0.0))
    # evaluate from the nearer endpoint to preserve relative accuracy
    use_hi = np.where(np.isinf(zb), False, np.where(np.isinf(za), True, zx > 0.5 * (np.where(np.isfinite(za), za, 0.0) + np.where(np.isfinite(zb), zb, 0.0))))
    out = np.where(zx <= za, 0.0, np.where(zx >= zb, 1.0, np.where(use_hi, hi, lo)))
    return out if out.ndim else float(out)


def _interval_moments_right(za, zb):
    """h and second moment for 0 <= za <= zb (possibly zb = inf)."""
    za = np.asarray(za, dtype=float)
    zb = np.asarray(zb, dtype=float)
    finite_b = np.isfinite(zb)
    zbf = np.where(finite_b, zb, za + 1.0)
    c = np.where(finite_b, 0.5 * (za * za - zbf * zbf), -np.inf)
    ra = np.exp(_log_mills(za))
    erb = np.where(finite_b, np.exp(c + _log_mills(zbf)), 0.0)
    denom = ra - erb
    h = -np.expm1(np.where(finite_b, c, -np.inf)) / denom
    zb_ec = np.where(finite_b, zbf * np.exp(c), 0.0)
    second = 1.0 + (za - zb_ec) / denom
    return h, second


def interval_moments(za, zb):
    """Conditional mean shift and variance of N(0,1) restricted to [za, zb]."""
    za = np.asarray(za, dtype=float)
    zb = np.asarray(zb, dtype=float)
    scalar = za.ndim == 0 and zb.ndim == 0
    za, zb = np.atleast_1d(za), np.atleast_1d(zb)
    za, zb = np.broadcast_arrays(za, zb)
    h = np.empty(za.shape)
    second = np.empty(za.shape)

    right = za >= 0
    left = zb <= 0
    mid = ~(right | left)
    if np.any(right):
        h[right], second[right] = _interval_moments_right(za[right], zb[right])
    if np.any(left):
        hh, mm = _interval_moments_right(-zb[left], -za[left])
        h[left], second[left] = -hh, mm
    if np.any(mid):
        a, b = za[mid], zb[mid]
        pa = np.where(np.isfinite(a), np.exp(-0.5 * a * a - _LOG_SQRT_2PI), 0.0)
        pb = np.where(np.isfinite(b), np.exp(-0.5 * b * b - _LOG_SQRT_2PI), 0.0)
        z = np.exp(interval_log_mass(a, b))
        apa = np.where(np.isfinite(a), a * pa, 0.0)
        bpb = np.where(np.isfinite(b), b * pb, 0.0)
        h[mid] = (pa - pb) / z
        second[mid] = 1.0 + (apa - bpb) / z
    var = np.maximum(second - h * h, 0.0)
    if scalar:
        return float(h[0]), float(var[0])
    return h, var


# ---------------------------------------------------------------------------
# region and distribution types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TruncRegion:
    """Truncation region: two-sided tail (-inf,-lam]u[lam,inf) or interval [a,b]."""

    kind: str
    lam: float = 0.0
    a: float = -math.inf
    b: float = math.inf

    def __post_init__(self):
        if self.kind == "two_sided_tail":
            if not (self.lam >= 0.0):
                raise ValueError("two-sided tail threshold must be >= 0")
        elif self.kind == "interval":
            if not (self.a <= self.b):
                raise ValueError("interval requires a <= b")
        else:
            raise ValueError(f"unknown region kind {self.kind!r}")

    @classmethod
    def two_sided_tail(cls, lam: float) -> "TruncRegion":
        return cls(kind="two_sided_tail", lam=float(lam))

    @classmethod
    def interval(cls, a: float, b: float) -> "TruncRegion":
        return cls(kind="interval", a=float(a), b=float(b))

    @classmethod
    def whole_line(cls) -> "TruncRegion":
        return cls(kind="two_sided_tail", lam=0.0)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "two_sided_tail":
            return np.abs(x) >= self.lam
        return (x >= self.a) & (x <= self.b)


@dataclass(frozen=True)
class TruncatedGaussian:
    """N(mu, sigma^2) restricted to a truncation region."""

    mu: float
    sigma: float
    region: TruncRegion
    _log_mass: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.sigma > 0.0):
            raise ValueError("sigma must be > 0")
        lm = _region_log_mass(self.mu, self.sigma, self.region)
        if not (lm > LOG_MASS_FLOOR):
            raise DegenerateRegion(
                f"region mass log {lm:.2f} below representable floor {LOG_MASS_FLOOR}"
            )
        object.__setattr__(self, "_log_mass", float(lm))


def _region_log_mass(mu, sigma, region: TruncRegion) -> float:
    if region.kind == "two_sided_tail":
        return float(tail_log_mass(mu / sigma, region.lam / sigma))
    za = (region.a - mu) / sigma
    zb = (region.b - mu) / sigma
    return float(interval_log_mass(za, zb))


def trunc_logmass(tg: TruncatedGaussian) -> float:
    return tg._log_mass


def trunc_mass(tg: TruncatedGaussian) -> float:
    return math.exp(tg._log_mass)


def trunc_logpdf(tg: TruncatedGaussian, x):
    x = np.asarray(x, dtype=float)
    z = (x - tg.mu) / tg.sigma
    lp = -0.5 * z * z - _LOG_SQRT_2PI - math.log(tg.sigma) - tg._log_mass
    out = np.where(tg.region.contains(x), lp, -np.inf)
    return out if out.ndim else float(out)


def trunc_pdf(tg: TruncatedGaussian, x):
    out = np.exp(trunc_logpdf(tg, x))
    return out if np.ndim(out) else float(out)


def trunc_cdf(tg: TruncatedGaussian, x):
    x = np.asarray(x, dtype=float)
    if tg.region.kind == "two_sided_tail":
        out = tail_cdf(x / tg.sigma, tg.mu / tg.sigma, tg.region.lam / tg.sigma)
    else:
        za = (tg.region.a - tg.mu) / tg.sigma
        zb = (tg.region.b - tg.mu) / tg.sigma
        out = interval_cdf((x - tg.mu) / tg.sigma, za, zb)
    return out if np.ndim(out) else float(out)


def trunc_mean(tg: TruncatedGaussian) -> float:
    if tg.region.kind == "two_sided_tail":
        h, _ = tail_moments(tg.mu / tg.sigma, tg.region.lam / tg.sigma)
    else:
        za = (tg.region.a - tg.mu) / tg.sigma
        zb = (tg.region.b - tg.mu) / tg.sigma
        h, _ = interval_moments(za, zb)
    return tg.mu + tg.sigma * float(h)


def trunc_var(tg: TruncatedGaussian) -> float:
    if tg.region.kind == "two_sided_tail":
        _, v = tail_moments(tg.mu / tg.sigma, tg.region.lam / tg.sigma)
    else:
        za = (tg.region.a - tg.mu) / tg.sigma
        zb = (tg.region.b - tg.mu) / tg.sigma
        _, v = interval_moments(za, zb)
    return tg.sigma ** 2 * float(v)


def trunc_quantile(tg: TruncatedGaussian, u):
    """Inverse CDF. u in [0, 1]; endpoints map to the region boundary."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0.0) or np.any(u > 1.0):
        raise ValueError("quantile level must be in [0, 1]")
    log_z = tg._log_mass
    with np.errstate(divide="ignore"):
        log_u = np.log(u)
        log_1mu = np.log1p(-np.minimum(u, 1.0))
    if tg.region.kind == "two_sided_tail":
        m = tg.mu / tg.sigma
        lam = tg.region.lam / tg.sigma
        log_pl = special.log_ndtr(-lam - m)  # log mass of the left branch
        left = u <= np.exp(log_pl - log_z)
        zl = special.ndtri_exp(np.minimum(log_u + log_z, 0.0))
        zr = -special.ndtri_exp(np.minimum(log_1mu + log_z, 0.0))
        zx = np.where(left, zl, zr)
    else:
        za = (tg.region.a - tg.mu) / tg.sigma
        zb = (tg.region.b - tg.mu) / tg.sigma
        if np.isfinite(za) and za >= 0.0:
            # mirror into the left tail for accuracy
            lp = np.logaddexp(special.log_ndtr(-zb), log_1mu + log_z)
            zx = -special.ndtri_exp(np.minimum(lp, 0.0))
        else:
            lp = np.logaddexp(special.log_ndtr(za), log_u + log_z)
            zx = special.ndtri_exp(np.minimum(lp, 0.0))
        zx = np.clip(zx, za, zb)
    out = tg.mu + tg.sigma * zx
    return out if out.ndim else float(out)


def trunc_sample(tg: TruncatedGaussian, rng: np.random.Generator, size=None):
    """Inverse-CDF sampling; one uniform consumed per variate."""
    u = rng.random(size)
    return trunc_quantile(tg, u)


def selective_pivot(value, mu0, sigma2, vminus, vplus):
    """CDF of N(mu0, sigma2) truncated to [vminus, vplus], evaluated at value.

    Uniform on (0, 1) conditional on the selection event that produced
    the truncation limits.
    """
    value = np.asarray(value, dtype=float)
    vminus = np.asarray(vminus, dtype=float)
    vplus = np.asarray(vplus, dtype=float)
    if np.any(value <= vminus) or np.any(value >= vplus):
        raise ValueError("value must lie strictly inside (vminus, vplus)")
    sigma = math.sqrt(float(sigma2))
    mu0 = np.asarray(mu0, dtype=float)
    za = (vminus - mu0) / sigma
    zb = (vplus - mu0) / sigma
    out = interval_cdf((value - mu0) / sigma, za, zb)
    return out if np.ndim(out) else float(out)
