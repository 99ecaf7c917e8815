"""Small statistical utilities shared by the fitting and benchmarking code."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


class UndefinedAUCError(ValueError):
    pass


def auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney rank sum.

    Ties between a positive and a negative score count one half.

    Parameters
    ----------
    scores : array_like
        Higher means more likely positive.
    labels : array_like of {0, 1}

    Returns
    -------
    float
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    pos = y == 1
    n1 = int(pos.sum())
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        raise UndefinedAUCError("AUC needs both classes")
    r = rankdata(s)  # midranks
    u = r[pos].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def mcfadden_r2(ll_model: float, ll_null: float) -> float:
    """McFadden pseudo-R2, ``1 - ll_model / ll_null``."""
    if ll_model > 0:
        raise ValueError("log-likelihood must be nonpositive")
    if not ll_null < 0:
        raise ValueError("null log-likelihood must be negative")
    return 1.0 - ll_model / ll_null


def holm_bonferroni(p, alpha=0.05):
    """Holm step-down adjustment.

    Returns adjusted p-values and reject flags in the input order.
    """
    p = np.asarray(p, dtype=np.float64).ravel()
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("p-values must lie in [0, 1]")
    m = len(p)
    if m == 0:
        return p.copy(), np.zeros(0, dtype=bool)
    order = np.argsort(p, kind="stable")
    scaled = (m - np.arange(m)) * p[order]
    adj_sorted = np.minimum(np.maximum.accumulate(scaled), 1.0)
    adj = np.empty(m)
    adj[order] = adj_sorted
    # step-down: stop at the first sorted hypothesis that is not rejected
    rej_sorted = np.cumprod(adj_sorted < alpha).astype(bool)
    reject = np.empty(m, dtype=bool)
    reject[order] = rej_sorted
    return adj, reject


def percentile(sorted_x, q):
    """Type-7 (linear interpolation) percentile of an ascending array, ``q`` in [0, 1]."""
    x = np.asarray(sorted_x, dtype=np.float64)
    n = len(x)
    h = (n - 1) * q
    lo = int(math.floor(h))
    hi = min(lo + 1, n - 1)
    return float(x[lo] + (h - lo) * (x[hi] - x[lo]))


@dataclass(frozen=True)
class BootstrapSummary:
    estimates: np.ndarray
    median: float
    ci: tuple
    n_fail: int = 0

    @property
    def n_ok(self):
        return len(self.estimates)

    @property
    def unreliable(self):
        total = self.n_ok + self.n_fail
        return total == 0 or self.n_fail > 0.2 * total


def percentile_bootstrap(estimates, alpha=0.05, n_fail=0) -> BootstrapSummary:
    """Percentile interval from bootstrap replicates.

    Non-finite replicates are kept; they sort to the ends and only affect
    the interval if they fall inside the requested percentiles.
    """
    x = np.sort(np.asarray(estimates, dtype=np.float64).ravel())
    if len(x) == 0:
        raise ValueError("no bootstrap estimates")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    lo = percentile(x, alpha / 2)
    hi = percentile(x, 1 - alpha / 2)
    return BootstrapSummary(x, percentile(x, 0.5), (lo, hi), int(n_fail))


@dataclass(frozen=True)
class BinnedResiduals:
    mean_fitted: np.ndarray
    mean_residual: np.ndarray
    band: np.ndarray
    size: np.ndarray

    @property
    def outside(self):
        return np.abs(self.mean_residual) > self.band

    @property
    def fraction_outside(self):
        return float(self.outside.mean()) if len(self.band) else 0.0


def binned_residuals(fitted, outcomes, n_bins=None) -> BinnedResiduals:
    """Equal-count bins of rows sorted by fitted probability.

    Each bin reports the mean fitted value, the mean residual ``y - p`` and
    the band ``2 sd / sqrt(size)``.
    """
    p = np.asarray(fitted, dtype=np.float64).ravel()
    y = np.asarray(outcomes, dtype=np.float64).ravel()
    n = len(p)
    if n_bins is None:
        n_bins = int(math.ceil(math.sqrt(n)))
    if n_bins < 1:
        raise ValueError("n_bins must be at least 1")
    if n < n_bins:
        raise ValueError("fewer rows than bins")
    order = np.argsort(p, kind="stable")
    chunks = np.array_split(order, n_bins)
    mf, mr, band, size = [], [], [], []
    for idx in chunks:
        r = y[idx] - p[idx]
        k = len(idx)
        mf.append(p[idx].mean())
        mr.append(r.mean())
        sd = r.std(ddof=1) if k > 1 else 0.0
        band.append(2.0 * sd / math.sqrt(k))
        size.append(k)
    return BinnedResiduals(np.array(mf), np.array(mr), np.array(band), np.array(size))
