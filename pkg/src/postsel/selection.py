"""Selection procedures and their affine-constraint representations.

Three procedures produce a conditioning event for downstream estimation:
fixed threshold (the orthogonal Lasso), top-K, and Benjamini-Hochberg at
FDR level q.  Each outcome carries the realized truncation threshold and
the metadata needed to (a) build the truncated-Gaussian conditioning
region and (b) express the selection event as affine constraints
{A y <= b} for verification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .truncnorm import TruncRegion, std_quantile


class TieAtBoundary(ValueError):
    """Top-K boundary tie: the conditioning event is ill-defined."""


class ConsistencyError(ValueError):
    """Selection outcome does not match the data it is claimed to come from."""


@dataclass(frozen=True)
class SelectionOutcome:
    """The conditioning event (E, z_E, threshold, procedure metadata)."""

    procedure: str               # 'fixed' | 'topk' | 'bh'
    n: int
    selected: np.ndarray         # indices ordered by decreasing |y|
    signs: np.ndarray            # sign(y_i) for i in selected
    threshold: float             # realized truncation threshold (data scale)
    param: float                 # lambda, K or q
    sigma: float = 1.0
    k_hat: int = 0
    boundary_index: int | None = None   # top-K only: index at rank K+1
    boundary_sign: int | None = None
    null_order: np.ndarray | None = None  # BH only: unselected by decreasing |y|
    null_signs: np.ndarray | None = None  # BH only: their signs

    def __post_init__(self):
        object.__setattr__(self, "selected", np.asarray(self.selected, dtype=int))
        object.__setattr__(self, "signs", np.asarray(self.signs, dtype=int))
        object.__setattr__(self, "k_hat", int(len(self.selected)))


@dataclass(frozen=True)
class AffineConstraint:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        if self.A.shape[0] != self.b.shape[0]:
            raise ValueError("A and b row counts disagree")


def _abs_order(y: np.ndarray) -> np.ndarray:
    """Indices sorted by decreasing |y|, stable in the original order."""
    return np.argsort(-np.abs(y), kind="stable")


def _signs_of(y, idx):
    return np.where(y[idx] >= 0, 1, -1).astype(int)


def select_fixed(y, lam: float, sigma: float = 1.0) -> SelectionOutcome:
    """E = {i : |y_i| > lam}, ordered by decreasing |y|."""
    y = np.asarray(y, dtype=float)
    if lam < 0:
        raise ValueError("lam must be >= 0")
    order = _abs_order(y)
    sel = order[np.abs(y[order]) > lam]
    return SelectionOutcome(
        procedure="fixed", n=len(y), selected=sel, signs=_signs_of(y, sel),
        threshold=float(lam), param=float(lam), sigma=sigma,
    )


def select_topk(y, k: int, sigma: float = 1.0) -> SelectionOutcome:
    """E = indices of the K largest |y_i|; threshold is |y|_(K+1)."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    if not 1 <= k <= n - 1:
        raise ValueError(f"K must satisfy 1 <= K <= n-1, got K={k}, n={n}")
    order = _abs_order(y)
    a = np.abs(y[order])
    if a[k - 1] == a[k]:
        raise TieAtBoundary(f"|y|_({k}) == |y|_({k + 1}) == {a[k]}")
    sel = order[:k]
    g = int(order[k])
    return SelectionOutcome(
        procedure="topk", n=n, selected=sel, signs=_signs_of(y, sel),
        threshold=float(a[k]), param=float(k), sigma=sigma,
        boundary_index=g, boundary_sign=int(1 if y[g] >= 0 else -1),
    )


def bh_thresholds(n: int, q: float) -> np.ndarray:
    """t_k = Phi^{-1}(1 - q k / (2n)) for k = 1..n (can go negative past k = n/q)."""
    if not 0.0 < q < 1.0:
        raise ValueError("q must be in (0, 1)")
    k = np.arange(1, n + 1)
    return std_quantile(1.0 - q * k / (2.0 * n))


def select_bh(y, q: float, sigma: float = 1.0) -> SelectionOutcome:
    """BH(q) step-up on two-sided p-values of y / sigma.

    k_hat is the largest k with |y|_(k)/sigma >= t_k (closed comparison);
    the realized threshold is sigma * t_{k_hat} on the data scale.
    """
    y = np.asarray(y, dtype=float)
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    n = len(y)
    t = bh_thresholds(n, q)
    order = _abs_order(y)
    a = np.abs(y[order]) / sigma
    hits = np.nonzero(a >= t)[0]
    k_hat = 0 if len(hits) == 0 else int(hits[-1] + 1)
    sel = order[:k_hat]
    rest = order[k_hat:]
    thr = float(sigma * t[k_hat - 1]) if k_hat > 0 else math.inf
    return SelectionOutcome(
        procedure="bh", n=n, selected=sel, signs=_signs_of(y, sel),
        threshold=thr, param=float(q), sigma=sigma,
        null_order=rest, null_signs=_signs_of(y, rest),
    )


def same_outcome(o1: SelectionOutcome, o2: SelectionOutcome) -> bool:
    """Equality of the conditioning tuple (procedure-specific)."""
    if o1.procedure != o2.procedure or o1.n != o2.n:
        return False
    p1, p2 = np.argsort(o1.selected), np.argsort(o2.selected)
    if not (np.array_equal(o1.selected[p1], o2.selected[p2])
            and np.array_equal(o1.signs[p1], o2.signs[p2])):
        return False
    if o1.procedure == "topk":
        return (o1.boundary_index == o2.boundary_index
                and o1.boundary_sign == o2.boundary_sign)
    if o1.procedure == "bh":
        if o1.k_hat != o2.k_hat:
            return False
        if not np.array_equal(o1.null_order, o2.null_order):
            return False
        # ordering constraints need the signs of all unselected elements
        # except the very smallest (see affine_build)
        return np.array_equal(o1.null_signs[:-1], o2.null_signs[:-1])
    return True


def _rerun(outcome: SelectionOutcome, y) -> SelectionOutcome:
    if outcome.procedure == "fixed":
        return select_fixed(y, outcome.param, outcome.sigma)
    if outcome.procedure == "topk":
        return select_topk(y, int(outcome.param), outcome.sigma)
    if outcome.procedure == "bh":
        return select_bh(y, outcome.param, outcome.sigma)
    raise ValueError(f"unknown procedure {outcome.procedure!r}")


def affine_build(outcome: SelectionOutcome, y) -> AffineConstraint:
    """Affine representation {A y <= b} of the selection event.

    For BH the rows bounding each unselected element by its rank quantile
    are not by themselves equivalent to the conditioning event: the
    ordering of |y| among the unselected elements must be pinned as well.
    Those ordering rows use the signs of the unselected elements (all but
    the smallest), which therefore join the conditioning tuple.
    """
    y = np.asarray(y, dtype=float)
    n = outcome.n
    if len(y) != n:
        raise ConsistencyError("dimension mismatch between outcome and y")
    if not same_outcome(outcome, _rerun(outcome, y)):
        raise ConsistencyError("outcome was not produced from this y")

    sel = outcome.selected
    z = outcome.signs.astype(float)
    rows: list[np.ndarray] = []
    rhs: list[float] = []

    def unit(i, c=1.0):
        r = np.zeros(n)
        r[i] = c
        return r

    if outcome.procedure == "fixed":
        lam = outcome.param
        others = np.setdiff1d(np.arange(n), sel, assume_unique=False)
        for i in others:
            if lam > 0:
                rows.append(unit(i, 1.0 / lam)); rhs.append(1.0)
                rows.append(unit(i, -1.0 / lam)); rhs.append(1.0)
            else:
                rows.append(unit(i, 1.0)); rhs.append(0.0)
                rows.append(unit(i, -1.0)); rhs.append(0.0)
        for i, zi in zip(sel, z):
            rows.append(unit(i, -zi)); rhs.append(-lam)

    elif outcome.procedure == "topk":
        g = outcome.boundary_index
        zg = float(outcome.boundary_sign)
        rows.append(unit(g, -zg)); rhs.append(0.0)
        hidx = np.setdiff1d(np.arange(n), np.append(sel, g))
        for i in hidx:
            rows.append(unit(i) - zg * unit(g)); rhs.append(0.0)
            rows.append(-unit(i) - zg * unit(g)); rhs.append(0.0)
        for i, zi in zip(sel, z):
            rows.append(-zi * unit(i) + zg * unit(g)); rhs.append(0.0)

    elif outcome.procedure == "bh":
        k_hat = outcome.k_hat
        t = bh_thresholds(n, outcome.param) * outcome.sigma
        for i, zi in zip(sel, z):
            rows.append(unit(i, -zi)); rhs.append(-outcome.threshold)
        rest = outcome.null_order
        rest_signs = outcome.null_signs.astype(float)
        for j, i in enumerate(rest):
            qk = t[k_hat + j]
            rows.append(unit(i)); rhs.append(qk)
            rows.append(unit(i, -1.0)); rhs.append(qk)
        # ordering of |y| within the unselected block
        for j in range(len(rest) - 1):
            hi, lo = rest[j], rest[j + 1]
            s = rest_signs[j]
            rows.append(unit(lo) - s * unit(hi)); rhs.append(0.0)
            rows.append(-unit(lo) - s * unit(hi)); rhs.append(0.0)
    else:
        raise ValueError(f"unknown procedure {outcome.procedure!r}")

    a_mat = np.vstack(rows) if rows else np.zeros((0, n))
    return AffineConstraint(a_mat, np.asarray(rhs, dtype=float))


def affine_verify(c: AffineConstraint, y) -> bool:
    """Exact elementwise A y <= b."""
    y = np.asarray(y, dtype=float)
    if c.A.shape[1] != len(y):
        raise ValueError("dimension mismatch")
    return bool(np.all(c.A @ y <= c.b))


def event_matches(outcome: SelectionOutcome, y) -> bool:
    """True iff re-running the procedure on y reproduces the conditioning tuple."""
    try:
        return same_outcome(outcome, _rerun(outcome, y))
    except TieAtBoundary:
        return False


def truncation_for(outcome: SelectionOutcome, i: int) -> TruncRegion:
    """Sign-marginalized truncation region for selected index i."""
    if i not in outcome.selected:
        raise ValueError(f"index {i} not in the selected set")
    return TruncRegion.two_sided_tail(outcome.threshold)


def sign_conditioned_bounds(outcome: SelectionOutcome, i: int) -> tuple[float, float]:
    """(V-, V+) for the sign-conditioned one-sided truncation of index i."""
    pos = np.nonzero(outcome.selected == i)[0]
    if len(pos) == 0:
        raise ValueError(f"index {i} not in the selected set")
    if outcome.signs[pos[0]] > 0:
        return (outcome.threshold, math.inf)
    return (-math.inf, -outcome.threshold)


def sk_profile(y, q: float, r: float) -> np.ndarray:
    """S_k = sum_{l<=k} t_l^r + sum_{l>k} |y|_(l)^r for k = 0..n.

    BH's k_hat is the rightmost local minimum of this profile, a standard
    characterization from the FDR-thresholding literature.
    """
    if not 0.0 < r <= 2.0:
        raise ValueError("r must be in (0, 2]")
    y = np.asarray(y, dtype=float)
    n = len(y)
    t = bh_thresholds(n, q)   # all positive: q k / (2n) < 1/2 for k <= n
    a = np.sort(np.abs(y))[::-1]
    tr = t ** r
    s = np.empty(n + 1)
    s[0] = np.sum(a ** r)
    s[1:] = s[0] + np.cumsum(tr - a ** r)
    return s


def profile_bh_index(s: np.ndarray) -> int:
    """Rightmost local minimum of an S_k profile; equals BH's k_hat."""
    d = np.diff(s)  # d[k-1] = S_k - S_{k-1}
    down = np.nonzero(d <= 0)[0]
    return 0 if len(down) == 0 else int(down[-1] + 1)


def leftmost_local_min(s: np.ndarray) -> int:
    """Smallest k with S_k <= S_{k-1} and S_k <= S_{k+1} (boundary allowed)."""
    n = len(s) - 1
    d = np.diff(s)
    for k in range(n + 1):
        left_ok = k == 0 or d[k - 1] <= 0
        right_ok = k == n or d[k] >= 0
        if left_ok and right_ok:
            return k
    return n
