"""Post-selection confidence intervals and their summary metrics.

Four constructions: inversion of the truncated-Gaussian CDF in its
location parameter, Benjamini-Yekutieli rank-adjusted intervals,
a Fisher-information Wald interval around the conditional MLE, and
empirical-Bayes posterior intervals from a fitted marginal density.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ebayes import DensityFit, efron_moments
from .estimators import est_tn
from .truncnorm import (TruncatedGaussian, TruncRegion, std_quantile,
                        tail_cdf, trunc_var)


class SolverError(RuntimeError):
    """Interval endpoint could not be bracketed."""


class InstabilityError(RuntimeError):
    """Fisher information numerically zero at the estimate."""


@dataclass(frozen=True)
class IntervalReport:
    indices: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float              # miscoverage p; nominal coverage is 1 - p
    method: str
    valid: np.ndarray         # per-interval validity flag

    def __post_init__(self):
        for f in ("indices", "lower", "upper", "valid"):
            object.__setattr__(self, f, np.atleast_1d(np.asarray(getattr(self, f))))
        ok = self.valid & np.isfinite(self.lower) & np.isfinite(self.upper)
        if np.any(self.lower[ok] > self.upper[ok]):
            raise ValueError("lower > upper in a valid interval")


def _cdf_in_mu(mu, y, t, sigma):
    """F_mu(y) on the two-sided tail region, vectorized in mu and y."""
    return tail_cdf(y / sigma, mu / sigma, np.full_like(np.asarray(mu, float),
                                                        t / sigma))


def _invert_cdf(y, t, sigma, target):
    """Solve F_mu(y) = target for mu (F strictly decreasing in mu)."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    target = np.broadcast_to(np.asarray(target, dtype=float), y.shape).copy()
    lo = y - 30.0 * sigma
    hi = y + 30.0 * sigma
    for _ in range(30):
        need_lo = _cdf_in_mu(lo, y, t, sigma) < target   # F(lo) must be >= target
        need_hi = _cdf_in_mu(hi, y, t, sigma) > target
        if not (np.any(need_lo) or np.any(need_hi)):
            break
        span = hi - lo
        lo = np.where(need_lo, lo - span, lo)
        hi = np.where(need_hi, hi + span, hi)
    else:
        raise SolverError("could not bracket the interval endpoint")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        go_right = _cdf_in_mu(mid, y, t, sigma) > target
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
    mid = 0.5 * (lo + hi)
    # one secant polish using the bracket endpoints
    flo = _cdf_in_mu(lo, y, t, sigma)
    fhi = _cdf_in_mu(hi, y, t, sigma)
    denom = fhi - flo
    sec = np.where(np.abs(denom) > 0, lo + (target - flo) * (hi - lo)
                   / np.where(denom == 0, 1.0, denom), mid)
    use = (sec >= lo) & (sec <= hi) & np.isfinite(sec)
    return np.where(use, sec, mid)


def ci_tn(y, t: float, sigma: float = 1.0, p: float = 0.1):
    """Level-(1-p) interval by inverting the truncated-Gaussian CDF in mu.

    L solves F_L(y) = 1 - p/2 and R solves F_R(y) = p/2 on the two-sided
    tail region at threshold t (sign unioned, matching est_tn).
    """
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    if sigma <= 0 or t < 0:
        raise ValueError("need sigma > 0 and t >= 0")
    if np.any(np.abs(y) < t):
        raise ValueError("all |y| must be >= t")
    if t == 0.0:
        z = std_quantile(1.0 - p / 2.0)
        lo, hi = y - sigma * z, y + sigma * z
    else:
        lo = _invert_cdf(y, t, sigma, 1.0 - p / 2.0)
        hi = _invert_cdf(y, t, sigma, p / 2.0)
    if scalar:
        return float(lo[0]), float(hi[0])
    return lo, hi


def ci_by(y, indices, sigma: float = 1.0, p: float = 0.1) -> IntervalReport:
    """Rank-adjusted intervals y_i +- sigma * z_{p / (2|E|)}."""
    y = np.asarray(y, dtype=float)
    indices = np.atleast_1d(np.asarray(indices, dtype=int))
    if len(indices) == 0:
        raise ValueError("selected set is empty")
    half = sigma * std_quantile(1.0 - p / (2.0 * len(indices)))
    ys = y[indices]
    return IntervalReport(indices=indices, lower=ys - half, upper=ys + half,
                          level=p, method="by", valid=np.ones(len(indices), bool))


def ci_fisher(y_i: float, t: float, sigma: float = 1.0, p: float = 0.1):
    """Wald interval mu_hat +- z_{p/2} / sqrt(I(mu_hat)), with the
    observed-information surrogate I(mu) = trunc_var(mu) / sigma^4."""
    if abs(y_i) < t:
        raise ValueError("|y_i| must be >= t")
    mu_hat = float(est_tn(np.array([y_i]), t, sigma)[0])
    if t == 0.0:
        info = 1.0 / sigma ** 2
    else:
        tg = TruncatedGaussian(mu_hat, sigma, TruncRegion.two_sided_tail(t))
        info = trunc_var(tg) / sigma ** 4
    if info < 1e-12:
        raise InstabilityError(f"Fisher information {info:.3e} at mu={mu_hat:.4g}")
    half = std_quantile(1.0 - p / 2.0) / np.sqrt(info)
    return mu_hat - half, mu_hat + half


def ci_efron(x, fit: DensityFit, pi0: float = 1.0, p: float = 0.1,
             sigma: float = 1.0):
    """Posterior-moment intervals E1 +- z_{p/2} sqrt(V1).

    valid is False where the nonnull posterior variance is nonpositive;
    those intervals are returned as NaN, not fabricated.
    """
    em = efron_moments(x, fit, pi0, sigma)
    if np.any(em["fdr"] >= 1.0):
        raise ValueError("local fdr is 1 somewhere: no nonnull mass to "
                         "build an interval from")
    z = std_quantile(1.0 - p / 2.0)
    valid = em["valid"]
    with np.errstate(invalid="ignore"):
        half = z * np.sqrt(np.where(valid, em["var"], np.nan))
    return em["mean"] - half, em["mean"] + half, valid


_OCTILES = np.linspace(0.0, 1.0, 9)


def _octile_summary(v: np.ndarray) -> np.ndarray:
    """min, the seven inner octiles, max."""
    return np.quantile(v, _OCTILES)


def interval_metrics(report: IntervalReport, mu) -> dict:
    """Coverage and shape summaries against the true means.

    Returns mean width, false coverage proportion, upward-miss share
    (None when nothing is missed), and octile summaries of widths and
    of the relative position (mu - L) / (R - L).  Invalid intervals
    are excluded from the width/skew summaries and reported as a rate.
    """
    mu = np.asarray(mu, dtype=float)
    mu_sel = mu[report.indices]
    ok = report.valid & np.isfinite(report.lower) & np.isfinite(report.upper)
    n_ok = int(np.count_nonzero(ok))
    if n_ok == 0:
        raise ValueError("no valid intervals to summarize")
    lo, hi, m = report.lower[ok], report.upper[ok], mu_sel[ok]
    widths = hi - lo
    miss_up = m > hi
    miss_dn = m < lo
    n_miss = int(np.count_nonzero(miss_up | miss_dn))
    skew = np.where(widths > 0, (m - lo) / np.where(widths == 0, 1, widths), 0.5)
    return {
        "n": n_ok,
        "invalid_rate": 1.0 - n_ok / len(report.valid),
        "mean_width": float(np.mean(widths)),
        "fcp": n_miss / n_ok,
        "miss_up_share": (np.count_nonzero(miss_up) / n_miss) if n_miss else None,
        "width_octiles": _octile_summary(widths),
        "skew_octiles": _octile_summary(skew),
    }
