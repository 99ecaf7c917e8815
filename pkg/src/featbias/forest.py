"""Random forests for a binary outcome and their variable importances.

Two tree growers share one representation: CART trees grown on bootstrap
samples with the Gini criterion, and conditional inference trees grown on
63.2% subsamples, where each split is chosen by an association test and
growth stops once no candidate is significant after Bonferroni correction.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from . import kernels
from .seeding import tree_seeds

ALGOS = ("cart", "cif")
MEASURES = ("gini", "perm_accuracy", "perm_auc")
SAMPLE_MODES = ("bootstrap", "subsample_0632_without_replacement")


class UnsupportedCombinationError(ValueError):
    pass


@dataclass(frozen=True)
class ForestConfig:
    """Forest settings; ``None`` fields take the algorithm's default.

    ``mtry`` defaults to ``ceil(sqrt(p))``. ``min_node`` is the smallest
    allowed child weight (1 for cart, 7 for cif). ``n_perm`` permutations
    are averaged per (tree, feature) for permutation importances.
    """

    n_trees: int = 500
    mtry: int | None = None
    algo: str = "cart"
    sample_mode: str | None = None
    min_node: int | None = None
    cif_alpha: float = 0.05
    seed: int = 0
    n_perm: int = 1

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValueError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        if self.sample_mode is not None and self.sample_mode not in SAMPLE_MODES:
            raise ValueError(f"sample_mode must be one of {SAMPLE_MODES}")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be at least 1")
        if self.n_perm < 1:
            raise ValueError("n_perm must be at least 1")
        if not 0 < self.cif_alpha < 1:
            raise ValueError("cif_alpha must lie in (0, 1)")

    def resolved(self, p):
        mtry = self.mtry if self.mtry is not None else max(1, math.ceil(math.sqrt(p)))
        if not 1 <= mtry <= p:
            raise ValueError(f"mtry={mtry} outside [1, {p}]")
        mode = self.sample_mode or ("bootstrap" if self.algo == "cart" else SAMPLE_MODES[1])
        min_node = self.min_node if self.min_node is not None else (1 if self.algo == "cart" else 7)
        return mtry, mode, min_node


def _colmajor(X):
    return np.ascontiguousarray(np.asarray(X, dtype=np.float64).T).ravel()


@dataclass
class ForestModel:
    config: ForestConfig
    names: list
    n_train: int
    mtry: int
    nodes: dict
    y_train: np.ndarray = field(repr=False, default=None)

    @property
    def n_trees(self):
        return len(self.nodes["offsets"]) - 1

    @property
    def p(self):
        return len(self.names)

    def tree_values(self, X):
        """Leaf class-1 proportions, shape (n_trees, n)."""
        X = np.asarray(X, dtype=np.float64)
        nd = self.nodes
        return kernels.predict_trees(_colmajor(X), X.shape[0], nd["feature"], nd["threshold"], nd["left"],
                                     nd["right"], nd["value"], nd["offsets"])

    def predict_proba(self, X):
        """Fraction of trees voting for class 1."""
        return (self.tree_values(X) > 0.5).mean(axis=0)

    def predict(self, X):
        # ties go to class 0
        return (self.predict_proba(X) > 0.5).astype(np.int8)

    def oob_fraction(self):
        return (self.nodes["inbag"] == 0).mean(axis=1)

    def depths(self):
        """Maximum depth of each tree."""
        off = self.nodes["offsets"]
        d = self.nodes["depth"]
        return np.array([int(d[off[t]:off[t + 1]].max()) for t in range(self.n_trees)])

    def dump(self, path):
        """Write one JSON record per tree with its node arrays."""
        nd = self.nodes
        with open(path, "w") as fh:
            for t in range(self.n_trees):
                a, b = int(nd["offsets"][t]), int(nd["offsets"][t + 1])
                w = nd["weight"][a:b]
                v = nd["value"][a:b]
                rec = {
                    "tree": t,
                    "feature": nd["feature"][a:b].tolist(),
                    "threshold": nd["threshold"][a:b].tolist(),
                    "left": nd["left"][a:b].tolist(),
                    "right": nd["right"][a:b].tolist(),
                    "n0": (w * (1 - v)).round(9).tolist(),
                    "n1": (w * v).round(9).tolist(),
                }
                fh.write(json.dumps(rec) + "\n")


def _xy(data):
    if isinstance(data, tuple):
        X, y = data
        names = [f"x{j + 1}" for j in range(np.asarray(X).shape[1])]
        return np.asarray(X, dtype=np.float64), np.asarray(y), names
    return data.X, data.outcome, list(data.names)


def fit_forest(train, cfg: ForestConfig = ForestConfig()) -> ForestModel:
    """Grow ``cfg.n_trees`` trees on ``train`` (a Dataset or an ``(X, y)`` pair).

    Tree ``t`` draws its resample and candidate features from a stream
    seeded by ``(cfg.seed, t)`` only.
    """
    X, y, names = _xy(train)
    n, p = X.shape
    y = np.asarray(y).astype(np.int32)
    if n == 0 or y.min() == y.max():
        raise ValueError("training data must contain both outcome classes")
    mtry, mode, min_node = cfg.resolved(p)
    if cfg.algo == "cif":
        crit = float(chi2.ppf(1.0 - cfg.cif_alpha / mtry, 1))
    else:
        crit = 0.0
    n_sub = int(round(0.632 * n))
    nodes = kernels.build_forest(_colmajor(X), n, p, y, 0 if cfg.algo == "cart" else 1,
                                 0 if mode == "bootstrap" else 1, n_sub, mtry, int(min_node), crit,
                                 tree_seeds(cfg.seed, cfg.n_trees))
    return ForestModel(cfg, names, n, mtry, dict(nodes), y)


@dataclass
class ImportanceReport:
    measure: str
    names: list
    values: np.ndarray
    ranks: np.ndarray
    detected: np.ndarray
    per_tree: np.ndarray | None = field(default=None, repr=False)
    n_repeats: int = 1


def rank_values(values):
    """Ranks, 1 for the largest; ties (and NaN, which sort last) by ascending index."""
    v = np.asarray(values, dtype=np.float64)
    key = np.where(np.isnan(v), -np.inf, v)
    order = np.lexsort((np.arange(len(v)), -key))
    ranks = np.empty(len(v), dtype=np.int64)
    ranks[order] = np.arange(1, len(v) + 1)
    return ranks


def _detect(ranks, noise_flags):
    noise = np.asarray(noise_flags, dtype=bool)
    if not noise.any():
        raise ValueError("at least one feature must be marked as noise")
    first_noise = ranks[noise].min()
    return (ranks < first_noise) & ~noise


def importance(model: ForestModel, data, measure: str, noise_flags=None, rows="oob") -> ImportanceReport:
    """Per-feature importance of ``model``.

    ``gini`` is the mean over trees of the summed impurity decrease (as a
    fraction of the root weight). Permutation measures use each tree's
    out-of-bag rows of the training data ``data`` (``rows="oob"``) or every
    row of ``data`` for every tree (``rows="all"``, for held-out data). A
    tree that never splits on a feature scores exactly 0 for it, and trees
    whose evaluation rows hold one class are skipped under ``perm_auc``.
    """
    if rows not in ("oob", "all"):
        raise ValueError("rows must be 'oob' or 'all'")
    if measure not in MEASURES:
        raise ValueError(f"measure must be one of {MEASURES}, got {measure!r}")
    if measure == "gini" and model.config.algo == "cif":
        raise UnsupportedCombinationError("Gini importance is only defined for cart forests")
    X, y, names = _xy(data)
    if noise_flags is None:
        noise_flags = getattr(data, "noise_flags", None)
    nd = model.nodes
    if measure == "gini":
        per_tree = np.asarray(nd["gini"])
        values = per_tree.mean(axis=0)
    else:
        if rows == "oob":
            if X.shape[0] != model.n_train:
                raise ValueError("permutation importance needs the training rows (out-of-bag sets)")
            inbag = nd["inbag"]
        else:
            inbag = np.zeros((model.n_trees, X.shape[0]), dtype=np.asarray(nd["inbag"]).dtype)
        per_tree = kernels.perm_importance(_colmajor(X), X.shape[0], X.shape[1], np.asarray(y).astype(np.int32),
                                           nd["feature"], nd["threshold"], nd["left"], nd["right"], nd["value"],
                                           nd["offsets"], inbag, 0 if measure == "perm_accuracy" else 1,
                                           np.uint64(model.config.seed), int(model.config.n_perm))
        per_tree = np.asarray(per_tree)
        ok = ~np.isnan(per_tree[:, 0]) if per_tree.size else np.zeros(0, dtype=bool)
        values = per_tree[ok].mean(axis=0) if ok.any() else np.full(X.shape[1], np.nan)
    ranks = rank_values(values)
    det = _detect(ranks, noise_flags) if noise_flags is not None else np.zeros(len(values), dtype=bool)
    return ImportanceReport(measure, list(names), values, ranks, det, per_tree)


def rank_and_detect(reports, noise_flags) -> ImportanceReport:
    """Rank features by their mean importance over repeats and flag detections.

    A feature is detected when it ranks strictly above the best-ranked noise
    feature; noise features are never detected.
    """
    if len(reports) == 0:
        raise ValueError("need at least one report")
    vals = np.vstack([np.asarray(r.values, dtype=np.float64) for r in reports])
    mean = vals.mean(axis=0)
    ranks = rank_values(mean)
    det = _detect(ranks, noise_flags)
    return ImportanceReport(reports[0].measure, list(reports[0].names), mean, ranks, det, None, len(reports))
