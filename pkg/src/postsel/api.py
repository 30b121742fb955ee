"""Estimator-style facade over the selection / estimation / interval
pipeline, for quick interactive use alongside scikit-learn conventions."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from . import estimators, intervals, selection


class PostSelectionMeans(BaseEstimator):
    """Select coordinates of a Gaussian mean vector, then estimate the
    selected means with a selection-adjusted method.

    Parameters follow the library: procedure in {'bh', 'topk', 'fixed'}
    with its tuning value, noise scale sigma, a point-estimation method,
    and an interval level.  fit() expects the observation vector y.
    """

    def __init__(self, procedure: str = "bh", q: float = 0.1,
                 k: int = 10, lam: float = 1.0, sigma: float = 1.0,
                 method: str = "tn", level: float = 0.1,
                 seed: int | None = None):
        self.procedure = procedure
        self.q = q
        self.k = k
        self.lam = lam
        self.sigma = sigma
        self.method = method
        self.level = level
        self.seed = seed

    def fit(self, y):
        y = np.asarray(y, dtype=float).ravel()
        if self.procedure == "bh":
            outcome = selection.select_bh(y, self.q, self.sigma)
        elif self.procedure == "topk":
            outcome = selection.select_topk(y, self.k, self.sigma)
        elif self.procedure == "fixed":
            outcome = selection.select_fixed(y, self.lam, self.sigma)
        else:
            raise ValueError(f"unknown procedure {self.procedure!r}")
        rng = (np.random.default_rng(self.seed)
               if self.seed is not None else None)
        report = estimators.estimate_selected(outcome, y, self.method,
                                              rng=rng)
        self.y_ = y
        self.outcome_ = outcome
        self.selected_ = outcome.selected.copy()
        self.threshold_ = outcome.threshold
        self.estimates_ = report.estimates.copy()
        return self

    def predict(self) -> np.ndarray:
        """Full-length mean estimate: fitted values on the selected
        coordinates, zero elsewhere."""
        self._check_fitted()
        out = np.zeros(len(self.y_))
        out[self.selected_] = self.estimates_
        return out

    def confidence_intervals(self, method: str = "tn"):
        """IntervalReport for the selected coordinates."""
        self._check_fitted()
        sel = self.selected_
        if len(sel) == 0:
            raise ValueError("nothing selected")
        if method == "tn":
            lo, hi = intervals.ci_tn(self.y_[sel], self.threshold_,
                                     self.sigma, self.level)
            return intervals.IntervalReport(
                indices=sel, lower=lo, upper=hi, level=self.level,
                method="tn", valid=np.ones(len(sel), bool))
        if method == "by":
            return intervals.ci_by(self.y_, sel, self.sigma, self.level)
        raise ValueError(f"unsupported interval method {method!r}")

    def _check_fitted(self):
        if not hasattr(self, "y_"):
            raise RuntimeError("call fit() first")
