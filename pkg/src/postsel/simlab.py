"""Seeded simulation experiments.

All experiments are pure functions of their configuration and seed.
Each replication gets its own RNG substream keyed by (seed, replicate),
so all methods within a replication see the same data (paired design)
and replications can run concurrently in any order.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import kstest

from .estimators import (approx_abs_orderstat_mean, est_bias_corrected,
                         est_js, est_tn, estimate_selected)
from .intervals import (InstabilityError, IntervalReport, ci_by, ci_efron,
                        ci_fisher, ci_tn, interval_metrics)
from .ebayes import FitError, fit_lindsay
from .selection import bh_thresholds, select_bh, select_topk
from .truncnorm import std_cdf, std_quantile, std_sf


class InsufficientData(RuntimeError):
    """Too few pooled observations to test the claim."""


def _rep_rng(seed: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng([seed, replicate])


def _map_replicates(fn, s: int, threads: int | None):
    """fn(replicate) -> result, returned in replicate order."""
    if threads is None:
        threads = int(os.environ.get("POSTSEL_THREADS", 0)) or (os.cpu_count() or 1)
    if threads <= 1 or s == 1:
        return [fn(r) for r in range(s)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(s)))


@dataclass(frozen=True)
class SimConfig:
    n: int
    alpha: float = 0.15
    nu: float = 6.0
    sigma: float = 1.0
    s: int = 55
    seed: int = 0
    k_grid: tuple = ()
    q_grid: tuple = ()
    methods: tuple = ("tn", "ht", "st")

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("need at least one replication")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.n_signals > self.n:
            raise ValueError("more signals than coordinates")

    @property
    def n_signals(self) -> int:
        return int(math.ceil(self.n ** self.alpha))


@dataclass(frozen=True)
class MSEReport:
    axis_name: str
    axis: np.ndarray
    methods: tuple
    median: np.ndarray        # (len(axis), len(methods))
    mean: np.ndarray
    s: int
    counts: np.ndarray        # replications contributing per axis point


def gen_sparse_sample(cfg: SimConfig, replicate: int):
    """(y, mu) with ceil(n^alpha) signal means drawn N(nu, 1) at shuffled
    positions, the rest zero; y = mu + N(0, sigma^2) noise."""
    rng = _rep_rng(cfg.seed, replicate)
    mu = np.zeros(cfg.n)
    mu[: cfg.n_signals] = rng.normal(cfg.nu, 1.0, cfg.n_signals)
    mu = mu[rng.permutation(cfg.n)]
    y = mu + rng.normal(0.0, cfg.sigma, cfg.n)
    return y, mu


def partial_mse(estimates, mu, ranks, k: int) -> float:
    """Mean squared error over the k top-ranked coordinates."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ranks = np.asarray(ranks, dtype=int)
    if k > len(ranks):
        raise ValueError("k exceeds the ranked set")
    idx = ranks[:k]
    estimates = np.asarray(estimates, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return float(np.mean((estimates[idx] - mu[idx]) ** 2))


def winners_curse_demo(n: int, s: int, seed: int,
                       threads: int | None = None) -> dict:
    """Global-null selection bias: average MSE over the top K absolute
    order statistics for the raw, James-Stein and order-statistic
    bias-corrected estimators, plus the approximate null order-statistic
    means for reference."""
    if n < 10:
        raise ValueError("n must be >= 10")

    def one(rep):
        rng = _rep_rng(seed, rep)
        y = rng.normal(0.0, 1.0, n)
        ranks = np.argsort(-np.abs(y), kind="stable")
        sq = np.empty((3, n))
        sq[0] = y[ranks] ** 2
        sq[1] = est_js(y)[ranks] ** 2
        bc = est_bias_corrected(y[ranks], np.arange(1, n + 1), n)
        sq[2] = bc ** 2
        return np.cumsum(sq, axis=1) / np.arange(1, n + 1)

    curves = np.mean(_map_replicates(one, s, threads), axis=0)
    return {
        "k": np.arange(1, n + 1),
        "mse_raw": curves[0],
        "mse_js": curves[1],
        "mse_bc": curves[2],
        "approx_mean": approx_abs_orderstat_mean(np.arange(1, n + 1), n),
        "s": s,
    }


def _estimate_for_mse(outcome, y, method, rng):
    rep = estimate_selected(outcome, y, method, rng=rng)
    est = np.zeros(outcome.n)
    est[rep.indices] = rep.estimates
    return est


def run_topk_experiment(cfg: SimConfig, threads: int | None = None) -> MSEReport:
    """Median (and mean) MSE(K) per method over the K-grid."""
    ks = tuple(int(k) for k in cfg.k_grid)
    if not ks:
        raise ValueError("k_grid is empty")

    def one(rep):
        y, mu = gen_sparse_sample(cfg, rep)
        rng = _rep_rng(cfg.seed, 10 ** 6 + rep)     # bootstrap stream
        out = np.empty((len(ks), len(cfg.methods)))
        for a, k in enumerate(ks):
            o = select_topk(y, k, cfg.sigma)
            for m, method in enumerate(cfg.methods):
                est = _estimate_for_mse(o, y, method, rng)
                out[a, m] = partial_mse(est, mu, o.selected, k)
        return out

    cube = np.array(_map_replicates(one, cfg.s, threads))
    return MSEReport(axis_name="k", axis=np.array(ks, dtype=float),
                     methods=tuple(cfg.methods),
                     median=np.median(cube, axis=0), mean=np.mean(cube, axis=0),
                     s=cfg.s, counts=np.full(len(ks), cfg.s))


def run_bh_experiment(cfg: SimConfig, threads: int | None = None) -> MSEReport:
    """Median MSE over the realized BH selection, per q in the grid.

    Replications where BH selects nothing carry no MSE value; they are
    excluded from the medians and reported through `counts`.
    """
    qs = tuple(float(q) for q in cfg.q_grid)
    if not qs:
        raise ValueError("q_grid is empty")

    def one(rep):
        y, mu = gen_sparse_sample(cfg, rep)
        rng = _rep_rng(cfg.seed, 10 ** 6 + rep)
        out = np.full((len(qs), len(cfg.methods)), np.nan)
        for a, q in enumerate(qs):
            o = select_bh(y, q, cfg.sigma)
            if o.k_hat == 0:
                continue
            for m, method in enumerate(cfg.methods):
                est = _estimate_for_mse(o, y, method, rng)
                out[a, m] = partial_mse(est, mu, o.selected, o.k_hat)
        return out

    cube = np.array(_map_replicates(one, cfg.s, threads))
    counts = np.sum(~np.isnan(cube[:, :, 0]), axis=0)
    with warnings.catch_warnings():
        # all-NaN axis points are legitimate; counts carries the signal
        warnings.simplefilter("ignore", RuntimeWarning)
        med = np.nanmedian(cube, axis=0)
        mean = np.nanmean(cube, axis=0)
    return MSEReport(axis_name="q", axis=np.array(qs), methods=tuple(cfg.methods),
                     median=med, mean=mean, s=cfg.s, counts=counts)


def integrated_mse(reports: list, axis_name: str | None = None) -> MSEReport:
    """Pointwise arithmetic mean of median curves across reports sharing
    an axis grid (integration over the sparsity or q dimension)."""
    if not reports:
        raise ValueError("no reports")
    ref = reports[0]
    for r in reports[1:]:
        if (r.axis_name != ref.axis_name or r.methods != ref.methods
                or not np.array_equal(r.axis, ref.axis)):
            raise ValueError("reports do not share an axis grid")
    return MSEReport(axis_name=axis_name or ref.axis_name, axis=ref.axis.copy(),
                     methods=ref.methods,
                     median=np.mean([r.median for r in reports], axis=0),
                     mean=np.mean([r.mean for r in reports], axis=0),
                     s=sum(r.s for r in reports),
                     counts=np.sum([r.counts for r in reports], axis=0))


def run_efron_experiment(nu: float = -3.0, s: int = 30, q: float = 0.1,
                         p: float = 0.1, methods=("tn", "by"),
                         seed: int = 0, n: int = 10_000,
                         n_signals: int = 1000, pi0: float | None = None,
                         threads: int | None = None) -> dict:
    """Interval study on the two-group model: n_signals means drawn
    N(nu, 1), the rest zero; BH(q) selection; per-replication coverage
    and width metrics for each requested interval method."""
    methods = tuple(methods)
    bad = set(methods) - {"tn", "by", "fisher", "efron"}
    if bad:
        raise ValueError(f"unknown interval methods {sorted(bad)}")
    if pi0 is None:
        pi0 = 1.0 - n_signals / n

    def one(rep):
        rng = _rep_rng(seed, rep)
        mu = np.zeros(n)
        mu[:n_signals] = rng.normal(nu, 1.0, n_signals)
        mu = mu[rng.permutation(n)]
        y = mu + rng.normal(0.0, 1.0, n)
        o = select_bh(y, q)
        row = {"replicate": rep, "k_hat": o.k_hat, "threshold": o.threshold}
        if o.k_hat == 0:
            return row
        sel = o.selected
        for method in methods:
            valid = np.ones(o.k_hat, dtype=bool)
            if method == "tn":
                lo, hi = ci_tn(y[sel], o.threshold, 1.0, p)
            elif method == "by":
                rep_by = ci_by(y, sel, 1.0, p)
                lo, hi = rep_by.lower, rep_by.upper
            elif method == "fisher":
                lo = np.full(o.k_hat, np.nan)
                hi = np.full(o.k_hat, np.nan)
                for j, i in enumerate(sel):
                    try:
                        lo[j], hi[j] = ci_fisher(y[i], o.threshold, 1.0, p)
                    except InstabilityError:
                        valid[j] = False
            else:
                try:
                    fit = fit_lindsay(y)
                    lo, hi, valid = ci_efron(y[sel], fit, pi0, p)
                except (FitError, ValueError):
                    lo = np.full(o.k_hat, np.nan)
                    hi = np.full(o.k_hat, np.nan)
                    valid = np.zeros(o.k_hat, dtype=bool)
            report = IntervalReport(indices=sel, lower=lo, upper=hi,
                                    level=p, method=method, valid=valid)
            try:
                row[method] = interval_metrics(report, mu)
            except ValueError:
                row[method] = None
        return row

    rows = _map_replicates(one, s, threads)
    return {"rows": rows, "methods": methods, "q": q, "p": p, "nu": nu,
            "n": n, "n_signals": n_signals, "s": s, "seed": seed}


def pivot_uniformity(cfg: SimConfig, procedure: str = "topk",
                     s: int | None = None, k: int | None = None,
                     q: float = 0.1, naive: bool = False,
                     threads: int | None = None) -> dict:
    """Pool the sign-conditioned selective pivots over replications and
    test them against Unif(0, 1).

    With naive=True the truncation is deliberately ignored (the pivot
    becomes the unconditional Gaussian CDF), giving a negative control.
    """
    s = cfg.s if s is None else s

    def one(rep):
        y, mu = gen_sparse_sample(cfg, rep)
        if procedure == "topk":
            o = select_topk(y, k if k is not None else int(cfg.k_grid[0]),
                            cfg.sigma)
        elif procedure == "bh":
            o = select_bh(y, q, cfg.sigma)
        else:
            raise ValueError(f"unknown procedure {procedure!r}")
        if o.k_hat == 0:
            return np.empty(0)
        sel = o.selected
        if naive:
            return std_cdf((y[sel] - mu[sel]) / cfg.sigma)
        pos = o.signs > 0
        t = o.threshold
        piv = np.empty(o.k_hat)
        zsel = (y[sel] - mu[sel]) / cfg.sigma
        za = (t - mu[sel]) / cfg.sigma
        zb = (-t - mu[sel]) / cfg.sigma
        # conditional CDF on [t, inf) for positive signs, (-inf, -t] else
        piv[pos] = 1.0 - std_sf(zsel[pos]) / std_sf(za[pos])
        piv[~pos] = std_cdf(zsel[~pos]) / std_cdf(zb[~pos])
        return piv

    pooled = np.concatenate(_map_replicates(one, s, threads))
    if len(pooled) < 100:
        raise InsufficientData(f"only {len(pooled)} pooled pivots")
    res = kstest(pooled, "uniform")
    return {"n_pivots": len(pooled), "ks_stat": float(res.statistic),
            "p_value": float(res.pvalue), "pivots": pooled}


@dataclass(frozen=True)
class RiskBoundSpec:
    """Worst-case risk bound configuration over a sparsity ball.

    space 'l0' uses the number of nonzero means; 'weak_lp' / 'strong_lp'
    use decay / moment constraints with exponent p.  tau is the
    near-least-favorable spike height; the constants (u, v, w) are the
    ones appearing in the risk bound.
    """

    space: str                 # 'l0' | 'weak_lp' | 'strong_lp'
    eta_n: float
    q: float
    r: float = 2.0
    p: float = 0.0
    n: int = 10_000
    envelope_c: float = 1.0
    delta: float = 0.05

    def __post_init__(self):
        if self.space not in ("l0", "weak_lp", "strong_lp"):
            raise ValueError(f"unknown space {self.space!r}")
        if self.space == "l0" and self.p != 0.0:
            raise ValueError("l0 ball has p = 0")
        if self.space != "l0" and not 0.0 < self.p < self.r:
            raise ValueError("need 0 < p < r for lp balls")
        if not 0.0 < self.r <= 2.0:
            raise ValueError("r must be in (0, 2]")
        if not 0.0 < self.q < 1.0:
            raise ValueError("q must be in (0, 1)")
        etap = self.eta_n ** max(self.p, 1.0) if self.space == "l0" \
            else self.eta_n ** self.p
        lo = math.log(self.n) ** 5 / self.n
        hi = self.n ** (-self.delta)
        # the window is asymptotic and empty at desk-scale n (lo > 1 until
        # n is astronomically large); enforce the floor only when it binds
        if etap > hi or (lo <= hi and etap < lo):
            raise ValueError(f"eta_n^p = {etap:.3e} outside the sparsity "
                             f"window [{lo:.3e}, {hi:.3e}]")

    @property
    def tau(self) -> float:
        if self.space == "l0":
            return math.sqrt(2.0 * math.log(1.0 / self.eta_n))
        return math.sqrt(2.0 * self.p * math.log(1.0 / self.eta_n))

    @property
    def k_n(self) -> float:
        if self.space == "l0":
            return self.n * self.eta_n
        return self.n * self.eta_n ** self.p * self.tau ** (-self.p)

    @property
    def alpha_n(self) -> float:
        b4 = (1.0 - self.q) / 4.0
        return 1.0 / (b4 * self.tau)

    @property
    def u(self) -> float:
        return 1.0 - self.p / self.r if self.space == "weak_lp" else 1.0

    @property
    def v(self) -> float:
        return 2.0 if self.r == 2.0 else 1.0 + self.u / (1.0 - self.q)

    @property
    def w(self) -> float:
        return 0.0 if self.r == 2.0 else max(self.r - 1.0, 0.0)

    @property
    def minimax_risk(self) -> float:
        if self.space == "l0":
            return self.n * self.eta_n * self.tau ** self.r
        strong = self.n * self.eta_n ** self.p * self.tau ** (self.r - self.p)
        if self.space == "strong_lp":
            return strong
        return self.r / (self.r - self.p) * strong

    @property
    def bound(self) -> float:
        gain = max(2.0 * self.q - 1.0, 0.0) / (1.0 - self.q)
        return 2.0 ** self.w * self.minimax_risk * (self.v + self.u * gain)

    def configuration(self) -> np.ndarray:
        """A near-least-favorable mean vector in the ball."""
        mu = np.zeros(self.n)
        if self.space == "l0":
            k = int(self.k_n)
            mu[:k] = self.tau
        else:
            k = np.arange(1, self.n + 1)
            mu = (self.envelope_c * self.eta_n * self.n ** (1.0 / self.p)
                  * k ** (-1.0 / self.p))
            if self.space == "strong_lp":
                # rescale into the strong ball if the envelope overshoots
                norm = np.mean(np.abs(mu) ** self.p)
                if norm > self.eta_n ** self.p:
                    mu *= (self.eta_n ** self.p / norm) ** (1.0 / self.p)
        return mu


def _expected_exceedances(mu: np.ndarray, t: np.ndarray) -> np.ndarray:
    """sum_l P(|y_l| > t_k) for every k, under unit noise."""
    # (n_k,) result; mu broadcast over thresholds
    out = np.empty(len(t))
    for j, tk in enumerate(t):
        out[j] = float(np.sum(std_sf(tk - mu) + std_cdf(-tk - mu)))
    return out


def crossing_index(mu: np.ndarray, q: float) -> float:
    """Smallest k with sum_l P(|y_l| > t_k) = k, interpolated on the
    integer grid of BH quantiles."""
    n = len(mu)
    t = bh_thresholds(n, q)
    e = _expected_exceedances(mu, t)
    g = e - np.arange(1, n + 1)
    if g[0] <= 0:
        return max(e[0], 0.0)
    idx = np.nonzero(g <= 0)[0]
    if len(idx) == 0:
        return float(n)
    j = idx[0]
    # linear interpolation between k = j and k = j + 1
    return float(j + g[j - 1] / (g[j - 1] - g[j]) + 0.0) if j > 0 else 1.0


def risk_bound_check(spec: RiskBoundSpec, mc: int = 200, seed: int = 0,
                     slack: float = 0.25,
                     threads: int | None = None) -> dict:
    """Monte-Carlo sanity check of the worst-case risk bound.

    Draws data at a near-least-favorable configuration, forms the
    conditional-MLE estimator thresholded at the realized BH quantile,
    and compares the empirical l_r risk to the asymptotic bound.  Also
    audits, on every draw, the thresholding decomposition
    ||TN - HT||_r^r <= k_hat * t_hat^r and the sandwich
    k_- <= k_hat <= k_+ around the theoretical crossing index.
    """
    mu = spec.configuration()
    n = spec.n
    kmu = crossing_index(mu, spec.q)
    an_kn = spec.alpha_n * spec.k_n
    k_minus = (kmu - an_kn) if kmu > 2 * an_kn else 0.0
    k_plus = an_kn + max(kmu, an_kn)
    r = spec.r

    def one(rep):
        rng = _rep_rng(seed, rep)
        y = mu + rng.normal(0.0, 1.0, n)
        o = select_bh(y, spec.q)
        est = np.zeros(n)
        ht = np.zeros(n)
        if o.k_hat > 0:
            sel = o.selected
            est[sel] = est_tn(y[sel], o.threshold)
            ht[sel] = y[sel]
        risk = float(np.sum(np.abs(est - mu) ** r))
        diff = float(np.sum(np.abs(est - ht) ** r))
        allowance = o.k_hat * o.threshold ** r if o.k_hat else 0.0
        return risk, diff <= allowance + 1e-9, k_minus <= o.k_hat <= k_plus

    res = _map_replicates(one, mc, threads)
    risks = np.array([x[0] for x in res])
    ratio = float(np.mean(risks) / spec.bound)
    return {
        "empirical_risk": float(np.mean(risks)),
        "bound": spec.bound,
        "ratio": ratio,
        "passed": ratio <= 1.0 + slack,
        "decomposition_ok": all(x[1] for x in res),
        "sandwich_rate": float(np.mean([x[2] for x in res])),
        "k_mu": kmu, "k_minus": k_minus, "k_plus": k_plus,
        "mc": mc,
    }


def squeeze_audit(y_grid=None, t_grid=None) -> dict:
    """Grid check of the thresholding squeeze |ST| <= |TN| <= |HT|."""
    if y_grid is None:
        y_grid = np.linspace(-12.0, 12.0, 500)
    if t_grid is None:
        t_grid = np.linspace(0.0, 8.0, 500)
    y_grid = np.asarray(y_grid, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    worst = 0.0
    violations = 0
    for t in t_grid:
        ys = y_grid[np.abs(y_grid) >= t]
        if len(ys) == 0:
            continue
        tn = np.abs(est_tn(ys, float(t)))
        st = np.maximum(np.abs(ys) - t, 0.0)
        ht = np.abs(ys)
        v = np.maximum(st - tn, tn - ht)
        worst = max(worst, float(v.max()))
        violations += int(np.count_nonzero(v > 1e-9))
    return {"max_violation": worst, "violations": violations,
            "grid": (len(y_grid), len(t_grid))}
