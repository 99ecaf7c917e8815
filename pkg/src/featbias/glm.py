"""Weighted logistic regression by Newton-Raphson (IRLS) with profile intervals.

The same solver serves the plain maximum-likelihood fit and the Firth fit;
the latter adds half the log-determinant of the Fisher information to the
objective. Profiling fixes one coefficient and maximizes over the rest.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, optimize
from scipy.stats import chi2, norm

SEPARATION_BOUND = 20.0
PROFILE_BOUND = 30.0
MAX_ITER = 100
DEV_TOL = 1e-8
MAX_STEP = 5.0


class SeparationError(ValueError):
    """The outcome has a single class, so no finite ML fit exists."""


class RankDeficientError(ValueError):
    def __init__(self, columns):
        super().__init__(f"design is rank deficient; dependent columns: {', '.join(columns)}")
        self.columns = list(columns)


@dataclass
class DesignMatrix:
    """Feature matrix plus row weights, offset and an optional implicit intercept.

    Parameters
    ----------
    rows : ndarray, shape (n, p)
    weights : ndarray, shape (n,), optional
        Nonnegative prior weights, default 1.
    intercept_column : bool
        Prepend a column of ones when fitting.
    names : list of str, optional
    offset : ndarray, shape (n,), optional
    """

    rows: np.ndarray
    weights: np.ndarray | None = None
    intercept_column: bool = True
    names: list | None = None
    offset: np.ndarray | None = None
    intercept_mask: np.ndarray | None = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim == 1:
            self.rows = self.rows[:, None]
        n, p = self.rows.shape
        self.weights = np.ones(n) if self.weights is None else np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (n,):
            raise ValueError("weights must have one entry per row")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite and nonnegative")
        self.offset = np.zeros(n) if self.offset is None else np.asarray(self.offset, dtype=np.float64)
        if self.names is None:
            self.names = [f"x{j + 1}" for j in range(p)]
        if len(self.names) != p:
            raise ValueError("names must match the number of columns")
        # rows where the implicit intercept is 1; augmentation rows set it to 0
        if self.intercept_mask is None:
            self.intercept_mask = np.ones(n)
        else:
            self.intercept_mask = np.asarray(self.intercept_mask, dtype=np.float64)

    @property
    def n(self):
        return self.rows.shape[0]

    @property
    def p(self):
        return self.rows.shape[1]

    def full(self):
        """Matrix including the intercept column when there is one."""
        if self.intercept_column:
            return np.column_stack([self.intercept_mask, self.rows])
        return self.rows

    def full_names(self):
        return (["(Intercept)"] if self.intercept_column else []) + list(self.names)

    def take(self, idx):
        idx = np.asarray(idx)
        return DesignMatrix(self.rows[idx], self.weights[idx], self.intercept_column, list(self.names),
                            self.offset[idx], self.intercept_mask[idx])

    @classmethod
    def from_dataset(cls, data, intercept=True):
        return cls(data.X, intercept_column=intercept, names=list(data.names))


@dataclass
class FitResult:
    """Fitted logistic model; intervals are on the odds-ratio scale."""

    names: list
    coefficients: np.ndarray
    intercept: float | None
    covariance: np.ndarray
    converged: bool
    separation_detected: bool
    separated: np.ndarray
    log_likelihood: float
    iterations: int
    method: str = "ml"
    objective: float = np.nan
    theta: np.ndarray | None = None
    ci_lower: np.ndarray | None = None
    ci_upper: np.ndarray | None = None
    p_values: np.ndarray | None = None
    ci_method: str | None = None
    alpha: float = 0.05
    extra: dict = field(default_factory=dict)

    @property
    def odds_ratios(self):
        return np.exp(self.coefficients)

    @property
    def std_errors(self):
        k = len(self.theta) - len(self.coefficients)
        d = np.diag(self.covariance)[k:]
        return np.sqrt(np.where(d >= 0, d, np.nan))

    def significant(self):
        """Interval excludes an odds ratio of 1."""
        return (self.ci_lower > 1.0) | (self.ci_upper < 1.0)


@dataclass
class _Problem:
    A: np.ndarray
    y: np.ndarray
    w: np.ndarray
    offset: np.ndarray
    firth: bool = False


def _probs(eta):
    return np.exp(-np.logaddexp(0.0, -eta))


def _loglik(prob: _Problem, theta):
    eta = prob.offset + prob.A @ theta
    return float(np.sum(prob.w * (prob.y * eta - np.logaddexp(0.0, eta))))


def _info(A, W):
    return (A * W[:, None]).T @ A


def _logdet(I):
    try:
        c = linalg.cholesky(I, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return -np.inf
    d = np.diag(c)
    if np.any(d <= 0):
        return -np.inf
    return 2.0 * float(np.sum(np.log(d)))


def _evaluate(prob: _Problem, theta, need_grad=True):
    """Objective, modified score and information at ``theta``."""
    eta = prob.offset + prob.A @ theta
    p = _probs(eta)
    ll = float(np.sum(prob.w * (prob.y * eta - np.logaddexp(0.0, eta))))
    if not need_grad and not prob.firth:
        return ll, None, None
    W = prob.w * p * (1.0 - p)
    I = _info(prob.A, W)
    resid = prob.w * (prob.y - p)
    if not prob.firth:
        return ll, prob.A.T @ resid, I
    obj = ll + 0.5 * _logdet(I)
    if not need_grad or not np.isfinite(obj):
        return obj, None, I
    c = linalg.cholesky(I, lower=True, check_finite=False)
    B = linalg.solve_triangular(c, (prob.A * np.sqrt(W)[:, None]).T, lower=True, check_finite=False)
    h = np.sum(B * B, axis=0)
    return obj, prob.A.T @ (resid + h * (0.5 - p)), I


def _solve(I, g):
    """Newton direction; a singular information matrix gets a small ridge."""
    singular = False
    M = I
    scale = max(float(np.max(np.diag(I))), 1e-300) if I.size else 1.0
    lam = 1e-10 * scale
    while True:
        try:
            c = np.linalg.cholesky(M)
            z = linalg.solve_triangular(c, g, lower=True, check_finite=False)
            step = linalg.solve_triangular(c.T, z, lower=False, check_finite=False)
            if np.all(np.isfinite(step)):
                return step, singular
        except np.linalg.LinAlgError:
            pass
        singular = True
        M = I + lam * np.eye(len(g))
        lam *= 100.0
        if lam > 1e10 * scale:
            return g / scale, True


def _newton(prob: _Problem, theta0, fixed=None, max_iter=MAX_ITER, tol=DEV_TOL, escape=1e3):
    """Maximize the (possibly penalized) log-likelihood over the free coordinates.

    Stops when the relative objective change falls below ``tol`` and either
    the Newton step is negligible or some coefficient has run past the
    separation bound (the estimate is diverging and the objective is at its
    supremum to within ``tol``).
    """
    theta = np.array(theta0, dtype=np.float64)
    q = len(theta)
    free = np.ones(q, dtype=bool) if fixed is None else ~fixed
    obj, g, I = _evaluate(prob, theta)
    singular = False
    converged = False
    it = 0
    if not free.any():
        return theta, obj, I, True, False, 0
    while it < max_iter:
        it += 1
        gf = g[free]
        step, sing = _solve(I[np.ix_(free, free)], gf)
        singular = sing
        longest = np.max(np.abs(step))
        if longest > MAX_STEP:
            step *= MAX_STEP / longest
        new = theta.copy()
        t = 1.0
        for _ in range(30):
            new[free] = theta[free] + t * step
            obj_new, g_new, I_new = _evaluate(prob, new)
            if np.isfinite(obj_new) and obj_new >= obj - 1e-12 * abs(obj):
                break
            t *= 0.5
        else:
            converged = True  # no ascent direction left
            break
        change = abs(obj_new - obj) / (abs(obj) + 0.1)
        big = np.max(np.abs(t * step)) if len(step) else 0.0
        theta, obj, g, I = new, obj_new, g_new, I_new
        runaway = np.max(np.abs(theta[free])) > SEPARATION_BOUND
        if change < tol and (big < 1e-6 or runaway):
            converged = True
            break
        if np.max(np.abs(theta[free])) > escape:
            break
    return theta, obj, I, converged, singular, it


def _check_rank(A, w, names):
    keep = w > 0
    M = A[keep] * np.sqrt(w[keep])[:, None]
    if M.shape[0] == 0:
        raise RankDeficientError(names)
    _, R, piv = linalg.qr(M, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    tol = max(M.shape) * np.finfo(float).eps * (d[0] if len(d) else 0.0)
    rank = int(np.sum(d > tol)) if len(d) else 0
    if rank < A.shape[1]:
        raise RankDeficientError([names[k] for k in sorted(piv[rank:])])


def _problem(design: DesignMatrix, y, firth=False):
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(y) != design.n:
        raise ValueError("outcome length does not match design rows")
    if np.any((y != 0) & (y != 1)):
        raise ValueError("outcome must be 0/1")
    return _Problem(design.full(), y, design.weights, design.offset, firth)


def _start(prob: _Problem, intercept):
    theta = np.zeros(prob.A.shape[1])
    if intercept:
        on = prob.A[:, 0] > 0
        ybar = np.sum(prob.w[on] * prob.y[on]) / max(np.sum(prob.w[on]), 1e-300)
        ybar = min(max(ybar, 1e-4), 1 - 1e-4)
        theta[0] = np.log(ybar / (1 - ybar))
    return theta


def _fit(design: DesignMatrix, y, firth, method):
    prob = _problem(design, y, firth)
    names = design.full_names()
    _check_rank(prob.A, prob.w, names)
    theta, obj, I, conv, singular, it = _newton(prob, _start(prob, design.intercept_column))
    k = 1 if design.intercept_column else 0
    cov, sing2 = _covariance(I)
    singular = singular or sing2
    sep_each = np.abs(theta) > SEPARATION_BOUND
    separated = (not firth) and (bool(sep_each.any()) or singular)
    extra = {}
    if firth:
        sep_each[:] = False
    elif separated:
        extra["complete_separation"] = separable(prob.A, prob.y, prob.w)
    return FitResult(
        extra=extra,
        names=list(design.names),
        coefficients=theta[k:].copy(),
        intercept=float(theta[0]) if k else None,
        covariance=cov,
        converged=bool(conv),
        separation_detected=bool(separated),
        separated=sep_each[k:].copy(),
        log_likelihood=_loglik(prob, theta),
        iterations=it,
        method=method,
        objective=obj,
        theta=theta,
    )


def separable(A, y, w=None, drop=None):
    """True when some direction classifies every weighted row with positive margin.

    This is complete separation: the log-likelihood supremum is 0. ``drop``
    removes one column first.
    """
    A = np.asarray(A, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    keep = np.ones(len(y), dtype=bool) if w is None else np.asarray(w) > 0
    M = A[keep] * (2.0 * y[keep] - 1.0)[:, None]
    if drop is not None:
        M = np.delete(M, drop, axis=1)
    if M.shape[1] == 0:
        return False
    res = optimize.linprog(np.zeros(M.shape[1]), A_ub=-M, b_ub=-np.ones(M.shape[0]),
                           bounds=[(None, None)] * M.shape[1], method="highs")
    return res.status == 0


def _covariance(I):
    try:
        c = linalg.cho_factor(I, check_finite=False)
        cov = linalg.cho_solve(c, np.eye(I.shape[0]), check_finite=False)
        cond = np.linalg.cond(I)
        return cov, bool(cond > 1e12)
    except (linalg.LinAlgError, ValueError):
        return np.linalg.pinv(I), True


def fit_ml(design: DesignMatrix, y, ci="profile", alpha=0.05) -> FitResult:
    """Maximum-likelihood logistic regression.

    Parameters
    ----------
    design : DesignMatrix
    y : array_like of {0, 1}
    ci : {"profile", "wald", None}
        Interval method; None skips intervals and p-values.
    alpha : float

    Returns
    -------
    FitResult

    Raises
    ------
    SeparationError
        If the weighted outcome has a single class.
    RankDeficientError
        If the columns are linearly dependent.
    """
    yy = np.asarray(y, dtype=np.float64).ravel()
    w = design.weights
    if not (np.any((yy == 1) & (w > 0)) and np.any((yy == 0) & (w > 0))):
        raise SeparationError("outcome has a single class")
    fit = _fit(design, yy, firth=False, method="ml")
    if ci:
        fit = confidence_intervals(fit, design, yy, method=ci, alpha=alpha)
    return fit


def log_likelihood(design: DesignMatrix, y, beta) -> float:
    """Weighted Bernoulli log-likelihood; ``beta`` includes the intercept first if present.

    Probabilities are clamped to ``[1e-12, 1 - 1e-12]``.
    """
    beta = np.asarray(beta, dtype=np.float64)
    A = design.full()
    if len(beta) != A.shape[1]:
        raise ValueError(f"beta has length {len(beta)}, design has {A.shape[1]} columns")
    y = np.asarray(y, dtype=np.float64)
    p = np.clip(_probs(design.offset + A @ beta), 1e-12, 1 - 1e-12)
    return float(np.sum(design.weights * (y * np.log(p) + (1 - y) * np.log1p(-p))))


def score(design: DesignMatrix, y, beta):
    A = design.full()
    p = _probs(design.offset + A @ np.asarray(beta, dtype=np.float64))
    return A.T @ (design.weights * (np.asarray(y, dtype=np.float64) - p))


class _Profiler:
    """Profile objective for one coordinate, with warm starts."""

    def __init__(self, prob, theta_hat, obj_hat, j, null_start):
        self.prob = prob
        self.null_start = null_start
        self.theta_hat = theta_hat
        self.obj_hat = obj_hat
        self.j = j
        self.fixed = np.zeros(len(theta_hat), dtype=bool)
        self.fixed[j] = True
        self._last = {}
        self._memo = {}

    def __call__(self, b, side=0):
        key = float(b)
        if key in self._memo:
            return self._memo[key]
        start = self._last.get(side, self.theta_hat)
        if np.max(np.abs(start)) > SEPARATION_BOUND:
            # a saturated start has no curvature to follow; restart from the null fit
            start = self.null_start
        start = start.copy()
        start[self.j] = b
        theta, obj, *_ = _newton(self.prob, start, fixed=self.fixed, tol=1e-10)
        self._last[side] = theta
        self._memo[key] = obj
        return obj


def _profile_endpoint(prof: _Profiler, sign, target, step):
    # the search is confined to |beta| <= PROFILE_BOUND; a diverged estimate
    # starts from the boundary
    b0 = float(np.clip(prof.theta_hat[prof.j], -PROFILE_BOUND, PROFILE_BOUND))
    f = lambda b: prof(b, sign) - target
    inner = b0
    k = 0
    while True:
        b = b0 + sign * step * 2.0 ** k
        if abs(b) >= PROFILE_BOUND:
            b = sign * PROFILE_BOUND
            if sign * (b - b0) <= 0 or f(b) >= 0:
                return sign * np.inf
            break
        if f(b) < 0:
            break
        inner = b
        k += 1
    lo, hi = sorted((inner, b))
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        # objective at the estimate is not above target; degenerate interval side
        return inner
    return optimize.brentq(f, lo, hi, xtol=1e-10, rtol=1e-12)


def confidence_intervals(fit: FitResult, design: DesignMatrix, y, method="profile", alpha=0.05,
                         firth=None) -> FitResult:
    """Attach intervals (odds-ratio scale) and matching p-values to ``fit``.

    ``wald`` uses ``beta +- z se`` and Wald p-values. ``profile`` uses the
    points where the profiled objective drops by half the chi-square
    quantile, and likelihood-ratio p-values, so a coefficient is significant
    at ``alpha`` exactly when its interval excludes 1. An interval side
    that does not close within ``|beta| = 30`` is reported as 0 or inf.
    """
    if method not in ("wald", "profile"):
        raise ValueError(f"unknown interval method {method!r}")
    if firth is None:
        firth = fit.method == "firth"
    k = len(fit.theta) - len(fit.coefficients)
    beta = fit.coefficients
    se = fit.std_errors
    lo = np.empty(len(beta))
    hi = np.empty(len(beta))
    pv = np.empty(len(beta))
    if method == "wald":
        z = norm.ppf(1 - alpha / 2)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            lo[:] = np.exp(beta - z * se)
            hi[:] = np.exp(beta + z * se)
            pv[:] = 2 * norm.sf(np.abs(beta / se))
        for i in np.flatnonzero(fit.separated):
            if beta[i] > 0:
                hi[i] = np.inf
            else:
                lo[i] = 0.0
    else:
        prob = _problem(design, y, firth)
        crit = chi2.ppf(1 - alpha, 1)
        complete = bool(fit.extra.get("complete_separation", False))
        # under complete separation the supremum is exactly 0
        obj_hat = 0.0 if complete else fit.objective
        target = obj_hat - crit / 2
        null_start = _start(prob, design.intercept_column)
        for i in range(len(beta)):
            j = i + k
            if complete and separable(prob.A, prob.y, prob.w, drop=j):
                # the other columns separate on their own: flat profile
                lo[i], hi[i], pv[i] = -np.inf, np.inf, 1.0
                continue
            prof = _Profiler(prob, fit.theta, obj_hat, j, null_start)
            step = float(np.clip(se[i] if np.isfinite(se[i]) else 1.0, 0.05, 2.0))
            lo[i] = _profile_endpoint(prof, -1, target, step)
            hi[i] = _profile_endpoint(prof, +1, target, step)
            stat = 2 * (obj_hat - prof(0.0, 2))
            pv[i] = chi2.sf(max(stat, 0.0), 1)
        lo, hi = np.exp(lo), np.exp(hi)
    return replace(fit, ci_lower=lo, ci_upper=hi, p_values=np.clip(pv, 0.0, 1.0), ci_method=method, alpha=alpha)


def null_log_likelihood(y, weights=None):
    y = np.asarray(y, dtype=np.float64)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=np.float64)
    ybar = np.sum(w * y) / np.sum(w)
    if ybar in (0.0, 1.0):
        return 0.0
    return float(np.sum(w * (y * np.log(ybar) + (1 - y) * np.log1p(-ybar))))


def predict_proba(fit: FitResult, X):
    X = np.asarray(X, dtype=np.float64)
    eta = X @ fit.coefficients + (fit.intercept or 0.0)
    return _probs(eta)
