"""Point estimators for selected means.

The main estimator maximizes the truncated-Gaussian conditional
likelihood of a selected coordinate: solve, in mu, the equation
E[Y | |Y| > t, mu] = y.  Competitors: hard/soft thresholding,
positive-part James-Stein, a Taylor approximation to the expected
order statistic of |N(0,1)| samples, the induced additive bias
correction, SURE-tuned soft thresholding, and parametric-bootstrap
bias corrections of the winner's-curse type.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .selection import SelectionOutcome
from .truncnorm import std_pdf, std_quantile, tail_moments

_BISECT_ITERS = 90
_NEWTON_ITERS = 4


def est_ht(y, t: float) -> np.ndarray:
    """Hard threshold: keep y as-is (identity on the selected set)."""
    return np.asarray(y, dtype=float).copy()


def est_st(y, t: float) -> np.ndarray:
    """Soft threshold: shrink toward zero by t."""
    y = np.asarray(y, dtype=float)
    return np.sign(y) * np.maximum(np.abs(y) - t, 0.0)


def est_tn(y, t, sigma: float = 1.0) -> np.ndarray:
    """Conditional MLE: solve E[Y | |Y| > t, mu] = y for each selected y.

    t is a scalar threshold or one threshold per entry of y.  The
    solution lies between the soft- and hard-threshold values, which
    brackets the bisection; a few Newton steps (the derivative of the
    conditional mean in mu is the conditional variance over sigma^2)
    polish the root to near machine precision.
    """
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    if np.all(t == 0.0):
        return y.copy()
    if np.any(np.abs(y) < t):
        raise ValueError("all |y| must be >= t on the selection event")

    z = y / sigma
    lam = np.broadcast_to(t / sigma, z.shape)
    s = np.sign(z)
    az = np.abs(z)

    def cond_mean(m):
        # E[Z | |Z| > lam] for Z ~ N(m,1), m >= 0 here
        h, _ = tail_moments(m, lam)
        return m + h

    lo = np.maximum(az - lam, 0.0)   # soft-threshold end: cond_mean(lo) <= az
    hi = az.copy()                    # hard-threshold end: cond_mean(hi) >= az
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        too_low = cond_mean(mid) < az
        lo = np.where(too_low, mid, lo)
        hi = np.where(too_low, hi, mid)
    m = 0.5 * (lo + hi)
    for _ in range(_NEWTON_ITERS):
        h, v = tail_moments(m, lam)
        step = (m + h - az) / np.maximum(v, 1e-300)
        m = np.clip(m - step, 0.0, az)
    return sigma * s * m


def est_js(y, sigma: float = 1.0) -> np.ndarray:
    """Plain James-Stein shrinkage toward zero (no positive part; the
    factor can go negative)."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 3:
        raise ValueError("James-Stein needs n >= 3")
    ss = np.sum(y * y)
    if ss == 0.0:
        raise ValueError("zero vector: shrinkage factor undefined")
    return (1.0 - (n - 2) * sigma * sigma / ss) * y


def approx_abs_orderstat_mean(k, n: int) -> np.ndarray:
    """Second-order approximation to E |Z|_(k), the k-th largest of n
    absolute values of standard normals.

    With m = 1 - k / (2(n+1)) and g = Phi^{-1}(m), the beta-variance
    correction gives g * (1 + V / (8 phi(g)^2)) where
    V = k(n-k+1) / ((n+1)^2 (n+2)).
    """
    k = np.asarray(k, dtype=float)
    m = 1.0 - k / (2.0 * (n + 1.0))
    g = std_quantile(m)
    v = k * (n - k + 1.0) / ((n + 1.0) ** 2 * (n + 2.0))
    return g * (1.0 + v / (8.0 * std_pdf(g) ** 2))


def est_bias_corrected(y, ranks, n: int, sigma: float = 1.0) -> np.ndarray:
    """Subtract the approximate null order-statistic mean, by rank.

    ranks[i] is the 1-based rank of |y_i| among all n absolute values.
    The correction is sign(y) * (|y| - approx E|Y|_(rank)) and can cross
    zero; this is a global-null demonstration method.
    """
    y = np.asarray(y, dtype=float)
    ranks = np.asarray(ranks, dtype=int)
    corr = sigma * approx_abs_orderstat_mean(ranks, n)
    return np.sign(y) * (np.abs(y) - corr)


def sure_objective(y, t: float, sigma: float = 1.0) -> float:
    """Stein's unbiased risk estimate for soft thresholding at t."""
    y = np.asarray(y, dtype=float)
    s2 = sigma * sigma
    n = len(y)
    return float(s2 * n + np.sum(np.minimum(y * y, t * t))
                 - 2.0 * s2 * np.count_nonzero(y * y <= t * t))


def sure_threshold(y, sigma: float = 1.0) -> float:
    """Minimize the SURE objective over {0} U {|y_i| <= cap} U {cap},
    cap = sigma * sqrt(2 log n).  Ties go to the smaller threshold."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    cap = sigma * math.sqrt(2.0 * math.log(n)) if n > 1 else 0.0
    cand = np.abs(y)
    cand = cand[cand <= cap]
    cand = np.unique(np.concatenate([[0.0], cand, [cap]]))
    vals = np.array([sure_objective(y, t, sigma) for t in cand])
    return float(cand[int(np.argmin(vals))])


def est_sure(y, sigma: float = 1.0) -> tuple[np.ndarray, float]:
    t = sure_threshold(y, sigma)
    return est_st(y, t), t


def _sorted_abs_desc(x: np.ndarray) -> np.ndarray:
    return np.sort(np.abs(x))[::-1]


def _orderstat_bias(center: np.ndarray, sigma: float, b: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Mean over b parametric draws of the sorted-|.| order statistics
    minus the sorted |center|: the winner's-curse bias profile."""
    n = len(center)
    base = _sorted_abs_desc(center)
    acc = np.zeros(n)
    chunk = max(1, min(b, int(2e7) // max(n, 1)))
    done = 0
    while done < b:
        m = min(chunk, b - done)
        draws = rng.normal(center, sigma, size=(m, n))
        acc += np.sum(np.sort(np.abs(draws), axis=1)[:, ::-1], axis=0)
        done += m
    return acc / b - base


def _signed_orderstat_bias(center: np.ndarray, sigma: float, b: int,
                           rng: np.random.Generator) -> np.ndarray:
    """Like _orderstat_bias but on the signed order statistics."""
    n = len(center)
    base = np.sort(center)[::-1]
    acc = np.zeros(n)
    chunk = max(1, min(b, int(2e7) // max(n, 1)))
    done = 0
    while done < b:
        m = min(chunk, b - done)
        draws = rng.normal(center, sigma, size=(m, n))
        acc += np.sum(np.sort(draws, axis=1)[:, ::-1], axis=0)
        done += m
    return acc / b - base


def est_bootstrap(y, sigma: float = 1.0, order: int = 1,
                  rng: np.random.Generator | None = None,
                  b1: int = 1000, b2: int = 200,
                  true_mu=None, signed: bool = False) -> np.ndarray:
    """Bootstrap bias correction for the sorted order statistics.

    order=1: w(y) - bias(y); order=2: w(y) - 2 bias(y) + bias(mu1) where
    mu1 is the first-order estimate mapped back to centers; order=0 is
    the oracle variant, w(y) - bias(true_mu).  By default the ranking
    and correction live on the absolute scale (matching selection by
    |y|) and are re-signed by the observed signs at the corresponding
    ranks; signed=True ranks by the signed values instead.
    """
    y = np.asarray(y, dtype=float)
    if rng is None:
        raise ValueError("bootstrap needs an explicit rng")
    if signed:
        return _est_bootstrap_signed(y, sigma, order, rng, b1, b2, true_mu)
    perm = np.argsort(-np.abs(y), kind="stable")
    w = np.abs(y)[perm]
    signs = np.sign(y)[perm]
    signs[signs == 0] = 1.0

    if order == 0:
        if true_mu is None:
            raise ValueError("oracle bootstrap needs true_mu")
        bias = _orderstat_bias(np.asarray(true_mu, dtype=float), sigma, b1, rng)
        est_abs = w - bias
    elif order == 1:
        bias = _orderstat_bias(y, sigma, b1, rng)
        est_abs = w - bias
    elif order == 2:
        bias1 = _orderstat_bias(y, sigma, b2, rng)
        mu1_abs = w - bias1
        mu1 = np.empty_like(y)
        mu1[perm] = signs * mu1_abs
        bias2 = _orderstat_bias(mu1, sigma, b2, rng)
        est_abs = w - 2.0 * bias1 + bias2
    else:
        raise ValueError("order must be 0, 1 or 2")

    out = np.empty_like(y)
    out[perm] = signs * est_abs
    return out


def _est_bootstrap_signed(y, sigma, order, rng, b1, b2, true_mu):
    perm = np.argsort(-y, kind="stable")
    w = y[perm]
    if order == 0:
        if true_mu is None:
            raise ValueError("oracle bootstrap needs true_mu")
        est = w - _signed_orderstat_bias(np.asarray(true_mu, float),
                                         sigma, b1, rng)
    elif order == 1:
        est = w - _signed_orderstat_bias(y, sigma, b1, rng)
    elif order == 2:
        bias1 = _signed_orderstat_bias(y, sigma, b2, rng)
        mu1 = np.empty_like(y)
        mu1[perm] = w - bias1
        bias2 = _signed_orderstat_bias(mu1, sigma, b2, rng)
        est = w - 2.0 * bias1 + bias2
    else:
        raise ValueError("order must be 0, 1 or 2")
    out = np.empty_like(y)
    out[perm] = est
    return out


@dataclass(frozen=True)
class EstimateReport:
    method: str
    indices: np.ndarray
    estimates: np.ndarray
    threshold: float


_METHODS = ("tn", "ht", "st", "js", "bc", "sure", "boot1", "boot2")


def estimate_selected(outcome: SelectionOutcome, y, method: str = "tn",
                      rng: np.random.Generator | None = None) -> EstimateReport:
    """Point estimates for the selected coordinates of y."""
    y = np.asarray(y, dtype=float)
    if method not in _METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {_METHODS}")
    sel = outcome.selected
    ys = y[sel]
    t = outcome.threshold if outcome.k_hat > 0 else 0.0
    sig = outcome.sigma
    if method == "tn":
        est = est_tn(ys, t, sig)
    elif method == "ht":
        est = est_ht(ys, t)
    elif method == "st":
        est = est_st(ys, t)
    elif method == "js":
        est = est_js(y, sig)[sel]
    elif method == "bc":
        ranks = np.empty(outcome.n, dtype=int)
        ranks[np.argsort(-np.abs(y), kind="stable")] = np.arange(1, outcome.n + 1)
        est = est_bias_corrected(ys, ranks[sel], outcome.n, sig)
    elif method == "sure":
        est, _ = est_sure(y, sig)
        est = est[sel]
    else:  # boot1 / boot2
        if rng is None:
            raise ValueError(f"method {method!r} needs an rng")
        est = est_bootstrap(y, sig, order=1 if method == "boot1" else 2,
                            rng=rng)[sel]
    return EstimateReport(method=method, indices=sel.copy(),
                          estimates=np.asarray(est, dtype=float), threshold=t)
