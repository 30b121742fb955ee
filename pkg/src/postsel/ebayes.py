"""Empirical-Bayes machinery: smooth marginal density estimation via
Poisson regression on histogram counts, Tweedie posterior moments with a
local-fdr null adjustment, and a nonparametric grid-prior MLE fit by EM.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .truncnorm import std_pdf


class FitError(RuntimeError):
    """Density or prior fit failed to converge."""


class ExtrapolationWarning(UserWarning):
    """Query point outside the range the density was fit on."""


@dataclass(frozen=True)
class NaturalSplineBasis:
    """Natural cubic spline basis, linear beyond the boundary knots.

    With K knots the non-constant basis has K - 1 columns:
    N_1(x) = x and N_{j+1}(x) = d_j(x) - d_{K-1}(x) for j = 1..K-2,
    where d_j(x) = [(x - k_j)^3_+ - (x - k_K)^3_+] / (k_K - k_j).
    """

    knots: np.ndarray

    def __post_init__(self):
        kn = np.asarray(self.knots, dtype=float)
        if len(kn) < 3 or np.any(np.diff(kn) <= 0):
            raise ValueError("need at least 3 strictly increasing knots")
        object.__setattr__(self, "knots", kn)

    @classmethod
    def from_quantiles(cls, x, df: int = 7) -> "NaturalSplineBasis":
        """Boundary knots at min/max of x, df - 1 interior knots at
        equally spaced quantiles."""
        x = np.asarray(x, dtype=float)
        probs = np.linspace(0, 1, df + 1)
        kn = np.unique(np.quantile(x, probs))
        if len(kn) < df + 1:
            raise FitError("duplicate knots: data too discrete for this df")
        return cls(kn)

    @property
    def ncol(self) -> int:
        return len(self.knots) - 1

    def _d(self, x, j: int, deriv: int) -> np.ndarray:
        kn = self.knots
        pj = np.maximum(x - kn[j], 0.0)
        pk = np.maximum(x - kn[-1], 0.0)
        if deriv == 0:
            num = pj ** 3 - pk ** 3
        elif deriv == 1:
            num = 3.0 * (pj ** 2 - pk ** 2)
        else:
            num = 6.0 * (pj - pk)
        return num / (kn[-1] - kn[j])

    def design(self, x, deriv: int = 0) -> np.ndarray:
        """Basis matrix (len(x), ncol) of the deriv-th derivative."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        kk = len(self.knots)
        cols = [x if deriv == 0 else
                (np.ones_like(x) if deriv == 1 else np.zeros_like(x))]
        dlast = self._d(x, kk - 2, deriv)
        for j in range(kk - 2):
            cols.append(self._d(x, j, deriv) - dlast)
        return np.column_stack(cols)


@dataclass(frozen=True)
class DensityFit:
    basis: NaturalSplineBasis
    beta: np.ndarray            # intercept first, then basis coefficients
    lo: float
    hi: float
    log_normalizer: float
    n_iter: int
    grad_norm: float
    bin_edges: np.ndarray = None
    counts: np.ndarray = None

    @property
    def knots(self) -> np.ndarray:
        return self.basis.knots

    @property
    def df(self) -> int:
        return self.basis.ncol

    @property
    def bin_midpoints(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def _eta(self, x, deriv: int = 0) -> np.ndarray:
        b = self.basis.design(x, deriv) @ self.beta[1:]
        return b + (self.beta[0] if deriv == 0 else 0.0)

    def _warn_outside(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any((x < self.lo) | (x > self.hi)):
            warnings.warn("query outside the fitted range; the spline is "
                          "linear there and the density untrustworthy",
                          ExtrapolationWarning, stacklevel=3)
        return x

    def log_density(self, x) -> np.ndarray:
        x = self._warn_outside(x)
        return self._eta(x) - self.log_normalizer

    def density(self, x) -> np.ndarray:
        return np.exp(self.log_density(x))

    def dlog(self, x) -> np.ndarray:
        return self._eta(self._warn_outside(x), 1)

    def d2log(self, x) -> np.ndarray:
        return self._eta(self._warn_outside(x), 2)


def fit_lindsay(y, nbins: int = 120, df: int = 7, max_iter: int = 100,
                tol: float = 1e-8, fit_range=None) -> DensityFit:
    """Histogram-count Poisson regression with a log-linear spline model.

    Bins span [min(y) - 0.5, max(y) + 0.5] unless fit_range is given.
    Newton iterations from beta = 0 until the score norm drops below tol.
    The density is renormalized by quadrature so it integrates to one
    over the fit range.
    """
    y = np.asarray(y, dtype=float)
    if df < 3:
        raise ValueError("df must be >= 3")
    if nbins < df + 2:
        raise ValueError("nbins must be >= df + 2")
    if len(y) < df + 2:
        raise FitError("too few observations for the requested df")
    if fit_range is None:
        lo, hi = float(np.min(y) - 0.5), float(np.max(y) + 0.5)
    else:
        lo, hi = float(fit_range[0]), float(fit_range[1])
        if lo > np.min(y) or hi < np.max(y):
            raise ValueError("fit_range must cover the data")
    edges = np.linspace(lo, hi, nbins + 1)
    counts = np.histogram(y, bins=edges)[0].astype(float)
    centers = 0.5 * (edges[:-1] + edges[1:])

    basis = NaturalSplineBasis.from_quantiles(y, df)
    design = np.column_stack([np.ones(nbins), basis.design(centers)])
    # scale columns for a well-conditioned Newton system
    scale = np.maximum(np.abs(design).max(axis=0), 1.0)
    xs = design / scale

    beta = np.zeros(xs.shape[1])
    # start the intercept at the mean log-count level
    beta[0] = np.log(max(counts.mean(), 1e-3))
    # the score scales with the total count, so the convergence floor in
    # double precision does too
    gtol = tol * max(1.0, counts.sum())
    gnorm = np.inf
    for it in range(1, max_iter + 1):
        eta = xs @ beta
        mu = np.exp(eta)
        grad = xs.T @ (counts - mu)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= gtol:
            break
        hess = xs.T @ (mu[:, None] * xs)
        try:
            step = np.linalg.solve(hess + 1e-10 * np.eye(len(beta)), grad)
        except np.linalg.LinAlgError as e:
            raise FitError(f"singular Newton system at iteration {it}") from e
        ll0 = counts @ eta - mu.sum()
        t = 1.0
        for _ in range(40):
            cand = beta + t * step
            eta_c = xs @ cand
            if eta_c.max() < 700:
                ll = counts @ eta_c - np.exp(eta_c).sum()
                if ll > ll0 - 1e-12:
                    break
            t *= 0.5
        else:
            raise FitError("line search failed")
        beta = cand
    else:
        raise FitError(f"no convergence in {max_iter} iterations "
                       f"(score norm {gnorm:.3e})")

    beta = beta / scale
    fit = DensityFit(basis=basis, beta=beta, lo=lo, hi=hi,
                     log_normalizer=0.0, n_iter=it, grad_norm=gnorm)
    grid = np.linspace(lo, hi, 4001)
    vals = np.exp(fit._eta(grid))
    logz = float(np.log(simpson(vals, x=grid)))
    return DensityFit(basis=basis, beta=beta, lo=lo, hi=hi,
                      log_normalizer=logz, n_iter=it, grad_norm=gnorm,
                      bin_edges=edges, counts=counts.astype(int))


def tweedie_mean(x, fit: DensityFit, sigma: float = 1.0) -> np.ndarray:
    """Posterior mean x + sigma^2 * d/dx log f(x)."""
    return np.atleast_1d(np.asarray(x, dtype=float)) + sigma ** 2 * fit.dlog(x)


def local_fdr(x, fit: DensityFit, pi0: float = 1.0,
              sigma: float = 1.0) -> np.ndarray:
    """min(1, pi0 * phi(x / sigma) / (sigma * f(x)))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    raw = pi0 * std_pdf(x / sigma) / sigma * np.exp(-fit.log_density(x))
    return np.minimum(raw, 1.0)


def efron_moments(x, fit: DensityFit, pi0: float = 1.0,
                  sigma: float = 1.0) -> dict:
    """Nonnull posterior mean and variance with a point-null adjustment.

    Decomposing mu | x into a point mass at zero (weight fdr) and a
    nonnull part: E1 = (x + l') / (1 - fdr) and
    V1 = (sigma^2 (1 + sigma^2 l'') - fdr E1 ... ) / (1 - fdr) - fdr E1^2,
    expressed below for general sigma.  Negative V1 is reported, not
    raised: it flags an unstable fit at that x.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    fdr = local_fdr(x, fit, pi0, sigma)
    l1 = fit.dlog(x)
    l2 = fit.d2log(x)
    s2 = sigma ** 2
    post_mean = x + s2 * l1                      # E[mu | x]
    post_var = s2 * (1.0 + s2 * l2)              # Var[mu | x] + fdr-mixing
    denom = 1.0 - fdr
    with np.errstate(divide="ignore", invalid="ignore"):
        e1 = np.where(denom > 0, post_mean / denom, np.nan)
        v1 = np.where(denom > 0,
                      (post_var + post_mean ** 2) / denom - e1 ** 2, np.nan)
    valid = np.isfinite(v1) & (v1 > 0)
    return {"fdr": fdr, "mean": e1, "var": v1, "valid": valid,
            "marginal_mean": post_mean, "marginal_var": post_var}


@dataclass(frozen=True)
class GridPrior:
    atoms: np.ndarray
    weights: np.ndarray
    sigma: float
    loglik: float
    n_iter: int


def gmleb_fit(y, sigma: float = 1.0, step: float | None = None,
              max_iter: int = 2000, tol: float = 1e-8) -> GridPrior:
    """Nonparametric MLE of the prior on a uniform grid, via EM.

    Grid spacing defaults to sigma / 5 over [min(y) - 1, max(y) + 1].
    EM updates are guaranteed ascent; a decrease beyond round-off is an
    error.  Stops when the log-likelihood gain drops below tol.
    """
    y = np.asarray(y, dtype=float)
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if step is None:
        step = sigma / 5.0
    lo, hi = float(np.min(y) - 1.0), float(np.max(y) + 1.0)
    atoms = np.arange(lo, hi + step / 2, step)
    m = len(atoms)
    # likelihood matrix phi((y_i - g_j)/sigma), constants cancel in EM
    lik = np.exp(-0.5 * ((y[:, None] - atoms[None, :]) / sigma) ** 2)
    w = np.full(m, 1.0 / m)
    const = -0.5 * np.log(2 * np.pi * sigma ** 2)
    ll_prev = -np.inf
    for it in range(1, max_iter + 1):
        f = lik @ w
        ll = float(np.sum(np.log(f))) + const * len(y)
        if ll < ll_prev - 1e-12 * max(1.0, abs(ll_prev)):
            raise FitError(f"EM log-likelihood decreased at iteration {it}")
        if ll - ll_prev < tol:
            ll_prev = ll
            break
        ll_prev = ll
        w = w * np.mean(lik / f[:, None], axis=0)
        w = w / w.sum()
    return GridPrior(atoms=atoms, weights=w, sigma=sigma,
                     loglik=ll_prev, n_iter=it)


def gmleb_mean(x, prior: GridPrior) -> np.ndarray:
    """Posterior mean under the fitted grid prior."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lik = np.exp(-0.5 * ((x[:, None] - prior.atoms[None, :])
                         / prior.sigma) ** 2) * prior.weights[None, :]
    return (lik @ prior.atoms) / lik.sum(axis=1)
