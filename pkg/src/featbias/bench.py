"""Simulation protocols over the dataset grid and their aggregate tables.

Three protocols run per grid cell:

* forest: repeated stratified train/test splits, forest fits and
  out-of-bag importances, ranked against the first noise feature;
* regression: ML, Firth and Log-F fits on the full data with profile
  intervals and Holm-adjusted significance;
* bootstrap: repeated stratified subsamples with all regression methods,
  summarized by percentile intervals.

Every task draws its randomness from ``(root_seed, task keys)``, so tables
do not depend on the number of worker threads.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .datagen import (PAPER_OUTCOME_FRACTIONS, DatasetSpec, dataset_id, paper_grid, sample_dataset)
from .forest import (ALGOS, MEASURES, ForestConfig, ImportanceReport, fit_forest, importance, rank_and_detect,
                     rank_values)
from .glm import DesignMatrix, RankDeficientError, SeparationError, fit_ml, null_log_likelihood
from .penalized import (DEFAULT_ALPHA_GRID, LogFConfig, NetConfig, cv_tune, fit_firth, fit_logf, fit_net,
                        select_from_cv)
from .seeding import derive_rng, derive_seed
from .stats import auc, holm_bonferroni, mcfadden_r2, percentile_bootstrap

ALL_METHODS = ("ml", "firth", "logf", "lasso", "ridge", "enet")
LIKELIHOOD_METHODS = ("ml", "firth", "logf")
NET_METHODS = ("lasso", "ridge", "enet")
ALL_PAIRS = (("cart", "gini"), ("cart", "perm_accuracy"), ("cif", "perm_accuracy"), ("cif", "perm_auc"))
# any algorithm/measure combination except Gini on cif trees
VALID_PAIRS = tuple((a, m) for a in ALGOS for m in MEASURES if (a, m) != ("cif", "gini"))
PAPER_BOOTSTRAP_CELLS = ((100, 0.5), (100, 0.3), (100, 0.1), (1000, 0.5), (1000, 0.3), (1000, 0.1))
PROTOCOLS = ("forest", "regression", "bootstrap")

RANK_COLUMNS = ["dataset", "pair", "feature", "mean_importance", "rank", "detected"]
CI_COLUMNS = ["dataset", "method", "feature", "or_hat", "ci_lo", "ci_hi", "p_raw", "p_holm",
              "significant_raw", "significant_holm", "separation"]
BOOT_COLUMNS = ["dataset", "method", "feature", "median", "ci_lo", "ci_hi", "n_fail"]
QUALITY_COLUMNS = ["dataset", "method", "auc_train", "auc_test", "mcfadden_r2"]


def pair_name(pair):
    return f"{pair[0]}+{pair[1]}"


@dataclass(frozen=True)
class BenchConfig:
    """Settings for a benchmark run; see :func:`profile_config` for presets.

    ``sizes``/``outcome_fractions`` define the grid unless ``grid`` lists
    dataset specs explicitly. ``bootstrap_cells`` restricts the bootstrap
    protocol to the given ``(N, pi_1plus)`` cells (empty means all).
    """

    sizes: tuple = (100, 1000)
    outcome_fractions: tuple = PAPER_OUTCOME_FRACTIONS
    grid: tuple | None = None
    protocols: tuple = PROTOCOLS
    forest_repeats: int = 30
    forest_split: float = 0.7
    n_trees: int = 500
    mtry: int | None = None
    cif_alpha: float = 0.05
    n_perm: int = 1
    forest_pairs: tuple = ALL_PAIRS
    importance_rows: str = "oob"
    regression_methods: tuple = ALL_METHODS
    ci_method: str = "profile"
    alpha: float = 0.05
    holm: bool = True
    logf_m: int = 1
    bootstrap_reps: int = 200
    bootstrap_frac: float = 0.8
    bootstrap_cells: tuple = PAPER_BOOTSTRAP_CELLS
    enet_alpha_grid: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    cv_folds: int = 10
    lambda_path_len: int = 100
    root_seed: int = 0

    def __post_init__(self):
        if not 0 < self.forest_split < 1:
            raise ValueError("forest_split must lie in (0, 1)")
        if not 0 < self.bootstrap_frac < 1:
            raise ValueError("bootstrap_frac must lie in (0, 1)")
        if self.forest_repeats < 1:
            raise ValueError("forest_repeats must be at least 1")
        if self.bootstrap_reps < 2:
            raise ValueError("bootstrap_reps must be at least 2")
        bad = set(self.regression_methods) - set(ALL_METHODS)
        if bad:
            raise ValueError(f"unknown regression methods: {sorted(bad)}")
        pairs = tuple(tuple(p) for p in self.forest_pairs)
        if set(pairs) - set(VALID_PAIRS):
            raise ValueError(f"unsupported forest pairs: {sorted(set(pairs) - set(VALID_PAIRS))}")
        object.__setattr__(self, "forest_pairs", pairs)
        if set(self.protocols) - set(PROTOCOLS):
            raise ValueError(f"unknown protocols: {sorted(set(self.protocols) - set(PROTOCOLS))}")
        if self.importance_rows not in ("oob", "test"):
            raise ValueError("importance_rows must be 'oob' or 'test'")
        if self.ci_method not in ("profile", "wald"):
            raise ValueError("ci_method must be 'profile' or 'wald'")
        if not 0 <= int(self.root_seed) < 2**64:
            raise ValueError("root_seed must be a 64-bit unsigned integer")
        for name in ("sizes", "outcome_fractions", "regression_methods", "protocols", "enet_alpha_grid"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "bootstrap_cells", tuple(tuple(c) for c in self.bootstrap_cells))
        if self.grid is not None:
            object.__setattr__(self, "grid", tuple(self.grid))

    def specs(self):
        if self.grid is not None:
            return list(self.grid)
        return paper_grid(self.sizes, self.outcome_fractions, self.root_seed)

    def to_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "grid":
                v = None if v is None else [s.to_dict() for s in v]
            elif f.name in ("forest_pairs", "bootstrap_cells"):
                v = [list(x) for x in v]
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if d.get("grid") is not None:
            d["grid"] = tuple(DatasetSpec.from_dict(s) for s in d["grid"])
        return cls(**d)


def profile_config(name="desk", **overrides) -> BenchConfig:
    """Named presets.

    ``desk``: N in {100, 1000}, 200 bootstrap reps, a 5-point elastic-net
    alpha grid. ``paper``: N up to 10,000, 10,000 reps, an 11-point grid.
    """
    if name == "desk":
        cfg = BenchConfig()
    elif name == "paper":
        cfg = BenchConfig(sizes=(100, 1000, 10000), bootstrap_reps=10000, enet_alpha_grid=DEFAULT_ALPHA_GRID)
    else:
        raise ValueError(f"unknown profile {name!r}")
    return replace(cfg, **overrides) if overrides else cfg


def load_config(path, profile=None) -> BenchConfig:
    """Read a YAML config; keys override the named profile (default desk)."""
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValueError("config file must hold a mapping")
    prof = raw.pop("profile", None) or profile or "desk"
    base = profile_config(prof).to_dict()
    base.update(raw)
    return BenchConfig.from_dict(base)


def dump_config(cfg: BenchConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def stratified_split(y, frac, rng):
    """Indices (first, second) with ``round(frac * n_c)`` rows of each class in ``first``.

    Each class keeps at least one row on both sides when it has two or more.
    """
    y = np.asarray(y)
    first, second = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        k = int(round(frac * len(idx)))
        if len(idx) >= 2:
            k = min(max(k, 1), len(idx) - 1)
        first.append(idx[:k])
        second.append(idx[k:])
    return np.sort(np.concatenate(first)), np.sort(np.concatenate(second))


def _map(executor, fn, items):
    if executor is None:
        return [fn(x) for x in items]
    return list(executor.map(fn, items))


def _safe_auc(scores, labels):
    labels = np.asarray(labels)
    if labels.min() == labels.max():
        return float("nan")
    return auc(scores, labels)


# forest protocol

@dataclass
class ForestProtocolResult:
    dataset: str
    reports: dict
    repeat_values: dict
    auc_train: dict
    auc_test: dict


def _forest_repeat(data, cfg: BenchConfig, cell, r):
    rng = derive_rng(cfg.root_seed, "forest-split", cell, r)
    tr, te = stratified_split(data.outcome, cfg.forest_split, rng)
    train, test = data.subset(tr), data.subset(te)
    values, auc_tr, auc_te = {}, {}, {}
    for algo in dict.fromkeys(a for a, _ in cfg.forest_pairs):
        fc = ForestConfig(n_trees=cfg.n_trees, mtry=cfg.mtry, algo=algo, cif_alpha=cfg.cif_alpha,
                          n_perm=cfg.n_perm, seed=derive_seed(cfg.root_seed, "forest", cell, algo, r))
        try:
            model = fit_forest(train, fc)
        except Exception as exc:
            raise RuntimeError(f"{cell} repeat {r}: {algo} forest failed: {exc}") from exc
        auc_tr[algo] = _safe_auc(model.predict_proba(train.X), train.outcome)
        auc_te[algo] = _safe_auc(model.predict_proba(test.X), test.outcome)
        for a, measure in cfg.forest_pairs:
            if a == algo:
                if measure != "gini" and cfg.importance_rows == "test":
                    values[(a, measure)] = importance(model, test, measure, rows="all").values
                else:
                    values[(a, measure)] = importance(model, train, measure).values
    return values, auc_tr, auc_te


def run_forest_protocol(data, cfg: BenchConfig, cell=None, executor=None) -> ForestProtocolResult:
    """Repeat split, fit and importance ``cfg.forest_repeats`` times, then rank."""
    cell = cell or dataset_id(data.spec)
    outs = _map(executor, lambda r: _forest_repeat(data, cfg, cell, r), range(cfg.forest_repeats))
    reports, rep_vals = {}, {}
    for pair in cfg.forest_pairs:
        vals = np.vstack([o[0][pair] for o in outs])
        rep_vals[pair] = vals
        if any(data.noise_flags):
            per = [ImportanceReport(pair[1], list(data.names), v, None, None) for v in vals]
            reports[pair] = rank_and_detect(per, data.noise_flags)
        else:
            # no known noise: ranks only
            mean = vals.mean(axis=0)
            reports[pair] = ImportanceReport(pair[1], list(data.names), mean, rank_values(mean),
                                             np.zeros(data.p, dtype=bool), None, len(vals))
    algos = dict.fromkeys(a for a, _ in cfg.forest_pairs)
    auc_tr = {a: float(np.nanmean([o[1][a] for o in outs])) for a in algos}
    auc_te = {a: float(np.nanmean([o[2][a] for o in outs])) for a in algos}
    return ForestProtocolResult(cell, reports, rep_vals, auc_tr, auc_te)


# regression protocol

def _varying(X):
    return np.array([X[:, j].min() != X[:, j].max() for j in range(X.shape[1])], dtype=bool)


def _fit_likelihood(method, design, y, ci, alpha, m):
    if method == "ml":
        return fit_ml(design, y, ci=ci, alpha=alpha)
    if method == "firth":
        return fit_firth(design, y, ci=ci, alpha=alpha)
    return fit_logf(design, y, LogFConfig(m), ci=ci, alpha=alpha)


@dataclass
class MethodFit:
    method: str
    or_hat: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    p_raw: np.ndarray
    p_holm: np.ndarray
    significant_raw: np.ndarray
    significant_holm: np.ndarray
    separation: np.ndarray
    auc_train: float
    mcfadden_r2: float
    error: str | None = None


def _regression_one(data, cfg: BenchConfig, method):
    p = data.p
    nan = np.full(p, np.nan)
    keep = _varying(data.X)
    design = DesignMatrix(data.X[:, keep], names=[n for n, k in zip(data.names, keep) if k])
    y = data.outcome.astype(np.float64)
    try:
        fit = _fit_likelihood(method, design, y, cfg.ci_method, cfg.alpha, cfg.logf_m)
    except (SeparationError, RankDeficientError) as exc:
        f = np.zeros(p, dtype=bool)
        return MethodFit(method, nan, nan, nan, nan, nan, f, f, f, np.nan, np.nan, str(exc))

    def spread(v, fill):
        out = np.full(p, fill, dtype=np.asarray(v).dtype)
        out[keep] = v
        return out

    p_raw = spread(fit.p_values, np.nan)
    finite = ~np.isnan(p_raw)
    p_holm = np.full(p, np.nan)
    if cfg.holm:
        adj, _ = holm_bonferroni(p_raw[finite], cfg.alpha)
        p_holm[finite] = adj
    sig_raw = spread(fit.significant(), False)
    sig_holm = (p_holm < cfg.alpha) & finite & sig_raw if cfg.holm else np.zeros(p, dtype=bool)
    sep = spread(fit.separated, False) | (~keep)
    eta = data.X[:, keep] @ fit.coefficients + fit.intercept
    ll0 = null_log_likelihood(y)
    r2 = mcfadden_r2(fit.log_likelihood, ll0) if ll0 < 0 else np.nan
    return MethodFit(method, spread(fit.odds_ratios, np.nan), spread(fit.ci_lower, np.nan),
                     spread(fit.ci_upper, np.nan), p_raw, p_holm, sig_raw, sig_holm, sep,
                     _safe_auc(eta, data.outcome), r2)


def run_regression_protocol(data, cfg: BenchConfig, executor=None) -> dict:
    """Full-data likelihood fits with intervals and (Holm-adjusted) significance.

    Constant columns are left out of the fit and reported as NaN.
    """
    methods = [m for m in cfg.regression_methods if m in LIKELIHOOD_METHODS]
    outs = _map(executor, lambda m: _regression_one(data, cfg, m), methods)
    return dict(zip(methods, outs))


# bootstrap protocol

@dataclass
class BootstrapProtocolResult:
    dataset: str
    estimates: dict
    summaries: dict
    n_fail: dict
    auc_train: dict
    auc_test: dict
    mcfadden_r2: dict


def _net_cfg(cfg):
    return NetConfig(cv_folds=cfg.cv_folds, lambda_path_len=cfg.lambda_path_len)


def _bootstrap_rep(data, cfg: BenchConfig, cell, b):
    rng = derive_rng(cfg.root_seed, "boot", cell, b)
    tr, te = stratified_split(data.outcome, cfg.bootstrap_frac, rng)
    Xtr, ytr = data.X[tr], data.outcome[tr].astype(np.float64)
    Xte, yte = data.X[te], data.outcome[te]
    keep = _varying(Xtr)
    design = DesignMatrix(Xtr[:, keep])
    ll0 = null_log_likelihood(ytr)
    out = {}
    methods = cfg.regression_methods

    def record(method, coef, b0, ll, failed=None):
        ors = np.full(data.p, np.nan)
        ors[keep] = np.where(failed, np.nan, np.exp(coef)) if failed is not None else np.exp(coef)
        eta_tr = Xtr[:, keep] @ coef + b0
        eta_te = Xte[:, keep] @ coef + b0
        r2 = mcfadden_r2(min(ll, 0.0), ll0) if ll0 < 0 else np.nan
        out[method] = (ors, _safe_auc(eta_tr, ytr), _safe_auc(eta_te, yte), r2)

    for method in methods:
        if method not in LIKELIHOOD_METHODS:
            continue
        try:
            fit = _fit_likelihood(method, design, ytr, None, cfg.alpha, cfg.logf_m)
        except (SeparationError, RankDeficientError):
            out[method] = None
            continue
        failed = None
        if method == "ml" and fit.separation_detected:
            if fit.extra.get("complete_separation"):
                out[method] = None
                continue
            # quasi-separation: only the diverging coefficients fail
            failed = fit.separated
        record(method, fit.coefficients, fit.intercept, fit.log_likelihood, failed)
    nets = [m for m in methods if m in NET_METHODS]
    if nets:
        grid = set()
        if "lasso" in nets:
            grid.add(0.0)
        if "ridge" in nets:
            grid.add(1.0)
        if "enet" in nets:
            grid.update(float(a) for a in cfg.enet_alpha_grid)
        cv_rng = derive_rng(cfg.root_seed, "cv", cell, b)
        _, details = cv_tune(design, ytr, sorted(grid), _net_cfg(cfg), rng=cv_rng, return_details=True)
        for method in nets:
            alphas = {"lasso": [0.0], "ridge": [1.0]}.get(method, cfg.enet_alpha_grid)
            chosen = select_from_cv(details, alphas)
            fit = fit_net(design, ytr, chosen)
            record(method, fit.coefficients, fit.intercept, fit.log_likelihood)
    return out


def run_bootstrap_protocol(data, cfg: BenchConfig, cell=None, executor=None) -> BootstrapProtocolResult:
    """Refit every method on ``cfg.bootstrap_reps`` stratified subsamples.

    An ML rep with complete separation counts as a failure for every
    feature. Under quasi-separation only the diverging coefficients fail,
    and a feature that is constant in the subsample fails for that rep.
    """
    cell = cell or dataset_id(data.spec)
    reps = _map(executor, lambda b: _bootstrap_rep(data, cfg, cell, b), range(cfg.bootstrap_reps))
    est, summ, nfail, atr, ate, r2 = {}, {}, {}, {}, {}, {}
    for method in cfg.regression_methods:
        rows = [r.get(method) for r in reps]
        ok = [x for x in rows if x is not None]
        E = np.vstack([x[0] for x in ok]) if ok else np.full((0, data.p), np.nan)
        est[method] = E
        fails = np.full(data.p, len(rows) - len(ok))
        sums = []
        for j in range(data.p):
            col = E[:, j]
            good = col[~np.isnan(col)]
            fails[j] += len(col) - len(good)
            sums.append(percentile_bootstrap(good, cfg.alpha, n_fail=int(fails[j])) if len(good) else None)
        summ[method] = sums
        nfail[method] = fails
        atr[method] = float(np.nanmean([x[1] for x in ok])) if ok else np.nan
        ate[method] = float(np.nanmean([x[2] for x in ok])) if ok else np.nan
        r2[method] = float(np.nanmean([x[3] for x in ok])) if ok else np.nan
    return BootstrapProtocolResult(cell, est, summ, nfail, atr, ate, r2)


# aggregation

@dataclass
class BenchResult:
    rank_table: list = field(default_factory=list)
    ci_table: list = field(default_factory=list)
    bootstrap_table: list = field(default_factory=list)
    model_quality: list = field(default_factory=list)
    forest: dict = field(default_factory=dict)
    regression: dict = field(default_factory=dict)
    bootstrap: dict = field(default_factory=dict)

    def tables(self):
        return {
            "rank_table": (RANK_COLUMNS, self.rank_table),
            "ci_table": (CI_COLUMNS, self.ci_table),
            "bootstrap_table": (BOOT_COLUMNS, self.bootstrap_table),
            "model_quality": (QUALITY_COLUMNS, self.model_quality),
        }


def aggregate(results) -> BenchResult:
    """Merge per-cell protocol outputs into the four tables.

    ``results`` is a list of ``(dataset, names, forest, regression,
    bootstrap)`` tuples with ``None`` for protocols that did not run. Rows
    are ordered by dataset, then method, then feature index.
    """
    out = BenchResult()
    for ds, names, fr, rg, bs in results:
        if fr is not None:
            out.forest[ds] = fr
            for pair, rep in fr.reports.items():
                for j, nm in enumerate(names):
                    out.rank_table.append({"dataset": ds, "pair": pair_name(pair), "feature": nm,
                                           "mean_importance": rep.values[j], "rank": int(rep.ranks[j]),
                                           "detected": bool(rep.detected[j])})
        if rg is not None:
            out.regression[ds] = rg
            for method, mf in rg.items():
                for j, nm in enumerate(names):
                    out.ci_table.append({"dataset": ds, "method": method, "feature": nm,
                                         "or_hat": mf.or_hat[j], "ci_lo": mf.ci_lo[j], "ci_hi": mf.ci_hi[j],
                                         "p_raw": mf.p_raw[j], "p_holm": mf.p_holm[j],
                                         "significant_raw": bool(mf.significant_raw[j]),
                                         "significant_holm": bool(mf.significant_holm[j]),
                                         "separation": bool(mf.separation[j])})
        if bs is not None:
            out.bootstrap[ds] = bs
            for method, sums in bs.summaries.items():
                for j, nm in enumerate(names):
                    s = sums[j]
                    out.bootstrap_table.append({
                        "dataset": ds, "method": method, "feature": nm,
                        "median": s.median if s else np.nan,
                        "ci_lo": s.ci[0] if s else np.nan, "ci_hi": s.ci[1] if s else np.nan,
                        "n_fail": int(bs.n_fail[method][j])})
        if fr is not None:
            for algo in fr.auc_test:
                out.model_quality.append({"dataset": ds, "method": algo, "auc_train": fr.auc_train[algo],
                                          "auc_test": fr.auc_test[algo], "mcfadden_r2": np.nan})
        if rg is not None:
            for method, mf in rg.items():
                out.model_quality.append({"dataset": ds, "method": method, "auc_train": mf.auc_train,
                                          "auc_test": np.nan, "mcfadden_r2": mf.mcfadden_r2})
        if bs is not None:
            for method in bs.summaries:
                if rg is not None and method in rg:
                    continue
                out.model_quality.append({"dataset": ds, "method": method, "auc_train": bs.auc_train[method],
                                          "auc_test": bs.auc_test[method], "mcfadden_r2": bs.mcfadden_r2[method]})
    return out


def _in_cells(spec, cells):
    if not cells:
        return True
    return any(spec.n == n and math.isclose(spec.pi_1plus, pi) for n, pi in cells)


def run_bench(cfg: BenchConfig, threads=1, progress=None) -> BenchResult:
    """Run the configured protocols on every grid cell."""
    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    results = []
    try:
        for spec in cfg.specs():
            data = sample_dataset(spec)
            ds = dataset_id(spec)
            if progress:
                progress(f"{ds}: start")
            fr = run_forest_protocol(data, cfg, ds, executor) if "forest" in cfg.protocols else None
            rg = run_regression_protocol(data, cfg, executor) if "regression" in cfg.protocols else None
            bs = None
            if "bootstrap" in cfg.protocols and _in_cells(spec, cfg.bootstrap_cells):
                bs = run_bootstrap_protocol(data, cfg, ds, executor)
            results.append((ds, list(data.names), fr, rg, bs))
    finally:
        if executor is not None:
            executor.shutdown()
    return aggregate(results)


def format_value(v):
    """Stable text for table cells; infinite endpoints become ``inf`` and ``0``."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if v == 0.0:
            return "0"
        return repr(v)
    return str(v)


def write_tables(result: BenchResult, out_dir) -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (cols, rows) in result.tables().items():
        path = out_dir / f"{name}.csv"
        tmp = path.with_suffix(".csv.tmp")
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in rows:
                w.writerow([format_value(row[c]) for c in cols])
        tmp.replace(path)
        written.append(path)
    return written
