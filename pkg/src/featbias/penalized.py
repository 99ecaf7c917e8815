"""Penalized logistic regression: Firth, Log-F(m, m) and the elastic net.

Mixing convention for the elastic net: ``alpha_mix = 0`` is the lasso and
``alpha_mix = 1`` is ridge, with penalty
``lambda * (alpha_mix * ||b||_2^2 + (1 - alpha_mix) * ||b||_1)`` added to the
total (not averaged) negative log-likelihood.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .glm import (DesignMatrix, FitResult, RankDeficientError, SeparationError, _check_rank, _fit,
                  _problem, confidence_intervals, fit_ml)

NET_TOL = 1e-7
METHOD_ALPHA = {"lasso": 0.0, "ridge": 1.0}
DEFAULT_ALPHA_GRID = tuple(np.round(np.linspace(0.0, 1.0, 11), 10))


@dataclass(frozen=True)
class LogFConfig:
    m: int = 1

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 0:
            raise ValueError("m must be a nonnegative integer")


@dataclass(frozen=True)
class NetConfig:
    """Elastic-net settings.

    Parameters
    ----------
    lambda_ : float
        Overall penalty.
    alpha_mix : float
        0 gives the lasso, 1 gives ridge.
    lambda_path_len : int
    cv_folds : int
    family : {"logistic", "linear"}
        ``linear`` uses squared loss ``0.5 * RSS``; it exists for closed-form checks.
    standardize : bool
        Scale non-binary columns to unit variance before fitting.
    """

    lambda_: float = 0.0
    alpha_mix: float = 0.5
    lambda_path_len: int = 100
    cv_folds: int = 10
    family: str = "logistic"
    standardize: bool = True
    lambda_decades: float = 4.0

    def __post_init__(self):
        if not self.lambda_ >= 0:
            raise ValueError("lambda must be nonnegative")
        if not 0.0 <= self.alpha_mix <= 1.0:
            raise ValueError("alpha_mix must lie in [0, 1]")
        if self.family not in ("logistic", "linear"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.lambda_path_len < 1 or self.cv_folds < 2:
            raise ValueError("need lambda_path_len >= 1 and cv_folds >= 2")


def fit_firth(design: DesignMatrix, y, ci="profile", alpha=0.05) -> FitResult:
    """Firth bias-reduced logistic regression.

    Maximizes ``loglik + 0.5 * log det I(beta)``. Estimates stay finite under
    separation. Intervals and p-values come from the profile penalized
    likelihood.
    """
    fit = _fit(design, y, firth=True, method="firth")
    if ci:
        fit = confidence_intervals(fit, design, y, method=ci, alpha=alpha, firth=True)
    return fit


def augment_logf(design: DesignMatrix, y, cfg: LogFConfig = LogFConfig()):
    """Append ``m`` pseudo-row pairs per feature with weight ``m / 2``.

    Each pair has outcomes 1 and 0, the feature set to 1, every other
    feature and the intercept set to 0.
    """
    y = np.asarray(y, dtype=np.float64)
    m = int(cfg.m)
    if m == 0:
        return design, y
    p = design.p
    eye = np.repeat(np.eye(p), 2 * m, axis=0)
    rows = np.vstack([design.rows, eye])
    yy = np.concatenate([y, np.tile([1.0, 0.0], p * m)])
    k = len(eye)
    weights = np.concatenate([design.weights, np.full(k, m / 2.0)])
    offset = np.concatenate([design.offset, np.zeros(k)])
    mask = np.concatenate([design.intercept_mask, np.zeros(k)])
    aug = DesignMatrix(rows, weights, design.intercept_column, list(design.names), offset, mask)
    return aug, yy


def fit_logf(design: DesignMatrix, y, cfg: LogFConfig = LogFConfig(), ci="profile", alpha=0.05) -> FitResult:
    """Log-F(m, m) penalized fit by data augmentation.

    The coefficients and intervals come from the augmented fit. The
    reported log-likelihood uses the original rows only.
    """
    aug, yy = augment_logf(design, y, cfg)
    if cfg.m == 0:
        fit = fit_ml(design, y, ci=ci, alpha=alpha)
    else:
        fit = _fit(aug, yy, firth=False, method="logf")
        if ci:
            fit = confidence_intervals(fit, aug, yy, method=ci, alpha=alpha, firth=False)
    from .glm import _loglik

    ll = _loglik(_problem(design, y), fit.theta)
    return replace(fit, method="logf", log_likelihood=ll, extra={**fit.extra, "m": int(cfg.m)})


def _is_binary(col):
    return bool(np.all((col == 0) | (col == 1)))


@dataclass
class _Scaled:
    Xc: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    penalized: np.ndarray


def _prepare(design: DesignMatrix, standardize):
    X = design.rows
    n, p = X.shape
    center = np.zeros(p)
    scale = np.ones(p)
    w = design.weights
    sw = w.sum()
    if design.intercept_column and sw > 0:
        # centering is a reparameterization absorbed by the unpenalized
        # intercept; it leaves the optimum unchanged and decorrelates the
        # intercept from the slopes, which speeds up coordinate descent
        center = (w @ X) / sw
    if standardize and sw > 0:
        for j in range(p):
            col = X[:, j]
            if _is_binary(col):
                continue
            sd = float(np.sqrt(np.dot(w, (col - center[j]) ** 2) / sw))
            if sd > 0:
                scale[j] = sd
    Z = (X - center) / scale
    Xc = np.ascontiguousarray(Z.T).ravel()
    return _Scaled(Xc, center, scale, np.ones(p, dtype=np.uint8))


def lambda_max(design: DesignMatrix, y, alpha_mix=0.0, family="logistic", standardize=True) -> float:
    """Smallest penalty that zeroes every slope in the (near-)lasso limit.

    For ``alpha_mix`` near 1 the value is scaled by ``1 / max(1 - alpha_mix, 1e-3)``
    so ridge paths start from an equally flat model.
    """
    sc = _prepare(design, standardize)
    y = np.asarray(y, dtype=np.float64)
    w = design.weights
    n, p = design.rows.shape
    if design.intercept_column:
        ybar = np.dot(w, y) / w.sum()
        r = w * (y - ybar)
    else:
        r = w * (y - 0.5) if family == "logistic" else w * y
    Z = sc.Xc.reshape(p, n)
    g = np.abs(Z @ r).max() if p else 0.0
    return float(g / max(1.0 - alpha_mix, 1e-3))


def _fam(family):
    return 0 if family == "logistic" else 1


def _init_intercept(design, y, family):
    if not design.intercept_column:
        return 0.0
    w = design.weights
    ybar = float(np.dot(w, y) / w.sum())
    if family == "logistic":
        ybar = min(max(ybar, 1e-6), 1 - 1e-6)
        return float(np.log(ybar / (1 - ybar)))
    return ybar


def _path_raw(design, y, lambdas, alpha_mix, family, standardize, sc=None):
    """Coordinate-descent path on the internal scale; returns (b0s, betas, conv, scaling)."""
    y = np.asarray(y, dtype=np.float64)
    if sc is None:
        sc = _prepare(design, standardize)
    n, p = design.rows.shape
    lambdas = np.asarray(lambdas, dtype=np.float64)
    b0s, betas, conv = kernels.cd_path(sc.Xc, n, p, y, design.weights, lambdas, float(alpha_mix),
                                       sc.penalized, _fam(family), bool(design.intercept_column),
                                       NET_TOL, 200, 2000, _init_intercept(design, y, family), np.zeros(p))
    return np.asarray(b0s), np.asarray(betas), np.asarray(conv, dtype=bool), sc


def _to_original(b0s, betas, sc):
    slopes = betas / sc.scale
    ints = b0s - slopes @ sc.center
    return ints, slopes


def net_path(design: DesignMatrix, y, lambdas, cfg: NetConfig = NetConfig()):
    """Coefficients along ``lambdas`` (warm-started in the given order).

    Returns
    -------
    intercepts : ndarray, shape (L,)
    slopes : ndarray, shape (L, p)
    converged : ndarray of bool
    """
    b0s, betas, conv, sc = _path_raw(design, y, lambdas, cfg.alpha_mix, cfg.family, cfg.standardize)
    ints, slopes = _to_original(b0s, betas, sc)
    return ints, slopes, conv


def lambda_grid(lmax, length=100, decades=4.0):
    if lmax <= 0:
        return np.zeros(1)
    return lmax * np.logspace(0.0, -decades, length)


def fit_net(design: DesignMatrix, y, cfg: NetConfig) -> FitResult:
    """Elastic-net fit at ``cfg.lambda_`` by cyclic coordinate descent.

    The path from the lambda grid's top down to ``cfg.lambda_`` is followed
    for warm starts; the intercept is never penalized.
    """
    y = np.asarray(y, dtype=np.float64)
    lam = float(cfg.lambda_)
    lmax = lambda_max(design, y, cfg.alpha_mix, cfg.family, cfg.standardize)
    grid = lambda_grid(lmax, cfg.lambda_path_len, cfg.lambda_decades)
    lams = np.append(grid[grid > lam], lam)
    b0s, betas, conv, sc = _path_raw(design, y, lams, cfg.alpha_mix, cfg.family, cfg.standardize)
    ints, slopes = _to_original(b0s[-1:], betas[-1:], sc)
    return _net_result(design, y, float(ints[0]), slopes[0], bool(conv[-1]), cfg, lam)


def _method_name(alpha_mix):
    if alpha_mix == 0.0:
        return "lasso"
    if alpha_mix == 1.0:
        return "ridge"
    return "enet"


def _net_result(design, y, b0, slope, conv, cfg, lam):
    from .glm import _loglik

    p = design.p
    theta = np.concatenate([[b0], slope]) if design.intercept_column else slope.copy()
    if cfg.family == "logistic":
        ll = _loglik(_problem(design, y), theta)
    else:
        resid = y - design.full() @ theta
        ll = float(-0.5 * np.sum(design.weights * resid ** 2))
    q = len(theta)
    return FitResult(
        names=list(design.names),
        coefficients=slope.copy(),
        intercept=b0 if design.intercept_column else None,
        covariance=np.full((q, q), np.nan),
        converged=conv,
        separation_detected=False,
        separated=np.zeros(p, dtype=bool),
        log_likelihood=ll,
        iterations=0,
        method=_method_name(cfg.alpha_mix),
        objective=np.nan,
        theta=theta,
        extra={"lambda": lam, "alpha_mix": cfg.alpha_mix},
    )


def stratified_folds(y, k, rng):
    """Fold labels 0..k-1 with each class spread evenly over the folds."""
    y = np.asarray(y)
    if len(y) < k:
        raise ValueError(f"fewer rows ({len(y)}) than folds ({k})")
    folds = np.empty(len(y), dtype=np.int64)
    offset = 0
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        folds[idx] = (np.arange(len(idx)) + offset) % k
        offset += len(idx)
    return folds


def _deviance(y, eta, w, family):
    if family == "logistic":
        return 2.0 * np.sum(w * (np.logaddexp(0.0, eta) - y * eta))
    return np.sum(w * (y - eta) ** 2)


@dataclass
class CVResult:
    config: NetConfig
    alpha_grid: tuple
    lambdas: dict = field(default_factory=dict)
    cv_deviance: dict = field(default_factory=dict)


def cv_tune(design: DesignMatrix, y, alpha_grid=DEFAULT_ALPHA_GRID, cfg: NetConfig = NetConfig(), rng=None,
            return_details=False):
    """Pick ``(alpha_mix, lambda)`` by stratified k-fold cross-validated deviance.

    For each ``alpha_mix`` the path has ``cfg.lambda_path_len`` log-spaced
    points from the full-data ``lambda_max`` down ``cfg.lambda_decades``
    decades. The criterion is the mean over folds of the held-out deviance
    per row; exact ties go to the larger lambda.
    """
    y = np.asarray(y, dtype=np.float64)
    if rng is None:
        rng = np.random.default_rng(0)
    elif not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    if cfg.family == "logistic" and len(np.unique(y)) < 2:
        raise SeparationError("outcome has a single class")
    k = cfg.cv_folds
    folds = stratified_folds(y, k, rng) if cfg.family == "logistic" else rng.permutation(len(y)) % k
    A = design.full()
    details = CVResult(cfg, tuple(alpha_grid))
    train_parts = [(design.take(np.flatnonzero(folds != f)), np.flatnonzero(folds == f)) for f in range(k)]
    for a in alpha_grid:
        a = float(a)
        lams = lambda_grid(lambda_max(design, y, a, cfg.family, cfg.standardize), cfg.lambda_path_len,
                           cfg.lambda_decades)
        dev = np.zeros(len(lams))
        for f in range(k):
            tr, te = train_parts[f]
            ytr = y[folds != f]
            b0s, betas, _, sc = _path_raw(tr, ytr, lams, a, cfg.family, cfg.standardize)
            ints, slopes = _to_original(b0s, betas, sc)
            eta = design.offset[te][None, :] + slopes @ design.rows[te].T
            if design.intercept_column:
                eta = eta + ints[:, None] * A[te, 0][None, :]
            d = np.array([_deviance(y[te], eta[i], design.weights[te], cfg.family) for i in range(len(lams))])
            dev += d / max(design.weights[te].sum(), 1e-300)
        dev /= k
        details.lambdas[a] = lams
        details.cv_deviance[a] = dev
    out = select_from_cv(details, alpha_grid)
    if return_details:
        return out, details
    return out


def select_from_cv(details: CVResult, alphas):
    """Best ``(alpha_mix, lambda)`` among ``alphas`` of a finished CV run.

    Lets lasso, ridge and the elastic net share one set of fold paths.
    """
    best = None
    for a in alphas:
        a = float(a)
        for lam, dv in zip(details.lambdas[a], details.cv_deviance[a]):
            key = (dv, -lam)
            if best is None or key < best[0]:
                best = (key, a, lam)
    _, a_best, lam_best = best
    return replace(details.config, alpha_mix=a_best, lambda_=float(lam_best))
