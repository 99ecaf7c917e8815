"""Audit a real tabular dataset for imbalance-driven selection bias.

The data are read from CSV, known-noise features with set imbalances are
appended, and two tracks run side by side: explanatory likelihood fits on
all rows (odds ratios with intervals) and predictive models on a stratified
train/test split (importance ranks judged against the injected noise).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bench import _varying, format_value, stratified_split
from .datagen import (BINARY, CONTINUOUS, ContingencySpec, ContinuousFeatureSpec, Dataset, DatasetSpec,
                      sample_dataset)
from .forest import ForestConfig, fit_forest, importance, rank_values
from .glm import DesignMatrix, fit_ml, null_log_likelihood
from .penalized import (DEFAULT_ALPHA_GRID, LogFConfig, NetConfig, cv_tune, fit_firth, fit_logf, fit_net,
                        select_from_cv)
from .seeding import derive_rng, derive_seed
from .stats import auc, binned_residuals, mcfadden_r2

MISSING = frozenset({"", "na", "n/a", "nan", "null", "none", "?"})
EXPLANATORY = ("ml", "firth", "logf")
PREDICTIVE = ("lasso", "ridge", "enet", "cart+gini", "cart+perm_accuracy", "cif+perm_accuracy", "cif+perm_auc")
DEFAULT_METHODS = ("ml", "logf", "enet", "cart+gini", "cif+perm_auc")
GOOD_AUC = 0.7


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class AuditConfig:
    """Audit settings.

    ``binary_noise_imbalances`` are minority fractions of the injected
    binary noise columns (BinaryNoise1, ...); ``n_continuous_noise``
    standard normal columns (ContNoise1, ...) follow.
    """

    outcome_column: str = "Y"
    binary_noise_imbalances: tuple = (0.4, 0.25, 0.1, 0.05)
    n_continuous_noise: int = 3
    methods: tuple = DEFAULT_METHODS
    train_frac: float = 0.8
    alpha: float = 0.05
    n_trees: int = 500
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "binary_noise_imbalances", tuple(float(q) for q in self.binary_noise_imbalances))
        object.__setattr__(self, "methods", tuple(self.methods))
        for q in self.binary_noise_imbalances:
            if not 0 < q < 1:
                raise ValueError(f"noise imbalance {q} outside (0, 1)")
        if self.n_continuous_noise < 0:
            raise ValueError("n_continuous_noise must be nonnegative")
        bad = set(self.methods) - set(EXPLANATORY) - set(PREDICTIVE)
        if bad:
            raise ValueError(f"unknown audit methods: {sorted(bad)}")
        if not 0 < self.train_frac < 1:
            raise ValueError("train_frac must lie in (0, 1)")

    def noise_names(self):
        return ([f"BinaryNoise{i + 1}" for i in range(len(self.binary_noise_imbalances))]
                + [f"ContNoise{i + 1}" for i in range(self.n_continuous_noise)])


def _encode_binary(values, column):
    """Map a two-valued column to 0/1 with the less frequent value as 1."""
    levels, counts = np.unique(values, return_counts=True)
    if len(levels) == 1:
        return np.zeros(len(values)), {str(levels[0]): 0}
    if len(levels) != 2:
        raise EncodingError(f"column {column!r} has {len(levels)} distinct non-numeric values; "
                            "only two-valued categorical columns are supported")
    if counts[0] == counts[1]:
        one = levels[1]  # tie: the later value in sort order
    else:
        one = levels[int(np.argmin(counts))]
    zero = levels[0] if one == levels[1] else levels[1]
    return (values == one).astype(np.float64), {str(one): 1, str(zero): 0}


def _parse_column(raw, column):
    try:
        vals = np.array([float(v) for v in raw])
    except ValueError:
        vals = None
    if vals is not None and np.all(np.isfinite(vals)):
        distinct = np.unique(vals)
        if len(distinct) <= 2:
            if np.all(np.isin(distinct, (0.0, 1.0))):
                return vals, BINARY, None
            x, enc = _encode_binary(vals, column)
            return x, BINARY, enc
        return vals, CONTINUOUS, None
    x, enc = _encode_binary(np.asarray(raw, dtype=object).astype(str), column)
    return x, BINARY, enc


def ingest(path, outcome_column=None) -> Dataset:
    """Read a CSV into a Dataset.

    Columns with at most two distinct values become binary features; a
    two-valued column not already coded 0/1 is encoded with its minority
    value as 1, and so is the outcome. Rows with a missing value anywhere
    are dropped; ``data.meta["ingest"]`` records the counts and encodings.
    A ``.json`` sidecar next to the file may name the outcome column and
    flag noise features.
    """
    path = Path(path)
    side = path.with_suffix(".json")
    meta = json.loads(side.read_text()) if side.exists() else {}
    outcome_column = outcome_column or meta.get("outcome") or "Y"
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise EncodingError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if outcome_column not in header:
        raise EncodingError(f"{path}: outcome column {outcome_column!r} not found")
    if len(set(header)) != len(header):
        raise EncodingError(f"{path}: duplicate column names")
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise EncodingError(f"{path}: row {i + 2} has {len(r)} fields, expected {len(header)}")
    complete = [r for r in body if not any(c.strip().lower() in MISSING for c in r)]
    dropped = len(body) - len(complete)
    cols = {h: [r[j].strip() for r in complete] for j, h in enumerate(header)}

    y, kind, enc_y = _parse_column(cols[outcome_column], outcome_column)
    if kind != BINARY:
        raise EncodingError(f"outcome column {outcome_column!r} is not binary")
    feats = [h for h in header if h != outcome_column]
    side_feats = {f["name"]: f for f in meta.get("features", []) if isinstance(f, dict) and "name" in f}
    X, kinds, noise, encodings = [], [], [], {}
    for h in feats:
        x, k, enc = _parse_column(cols[h], h)
        X.append(x)
        kinds.append(k)
        noise.append(bool(side_feats.get(h, {}).get("noise", False)))
        if enc:
            encodings[h] = enc
    if enc_y:
        encodings[outcome_column] = enc_y
    n = len(complete)
    X = np.column_stack(X) if X else np.empty((n, 0))
    info = {"source": str(path), "outcome": outcome_column, "rows_read": len(body),
            "rows_dropped": dropped, "encodings": encodings}
    return Dataset(y.astype(np.int8), X, feats, kinds, noise, spec=meta.get("spec"), meta={"ingest": info})


def inject_noise(data: Dataset, cfg: AuditConfig = AuditConfig()) -> Dataset:
    """Append outcome-independent noise columns flagged as noise.

    Binary column ``k`` is Bernoulli with the k-th minority fraction;
    continuous columns are standard normal. Each column has its own stream
    derived from ``cfg.seed``.
    """
    names = cfg.noise_names()
    clash = sorted(set(names) & set(data.names))
    if clash:
        raise ValueError(f"noise column names collide with data columns: {clash}")
    n = data.n
    cols, kinds = [], []
    for i, q in enumerate(cfg.binary_noise_imbalances):
        rng = derive_rng(cfg.seed, "noise", "binary", i)
        cols.append((rng.random(n) < q).astype(np.float64))
        kinds.append(BINARY)
    for i in range(cfg.n_continuous_noise):
        rng = derive_rng(cfg.seed, "noise", "continuous", i)
        cols.append(rng.standard_normal(n))
        kinds.append(CONTINUOUS)
    if not cols:
        return data
    return data.with_columns(np.column_stack(cols), names, kinds, [True] * len(names))


def imbalance_summary(data: Dataset):
    """Majority/minority percentages, e.g. ``"59/41"``, for the outcome and each binary feature."""
    def split(x):
        q = float(np.mean(x))
        lo = min(q, 1 - q)
        return f"{round(100 * (1 - lo))}/{round(100 * lo)}"

    out = {"outcome": split(data.outcome), "n": data.n}
    for j, nm in enumerate(data.names):
        if data.feature_kinds[j] == BINARY:
            out[nm] = split(data.X[:, j])
    return out


@dataclass
class AuditReport:
    or_table: list = field(default_factory=list)
    importance_table: list = field(default_factory=list)
    quality: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    summary: str = ""
    imbalance: dict = field(default_factory=dict)

    def tables(self):
        return {
            "or_table": (["method", "feature", "or_hat", "ci_lo", "ci_hi", "p_value", "significant"], self.or_table),
            "importance_table": (["method", "feature", "importance", "rank", "detected"], self.importance_table),
            "quality": (["method", "auc_train", "auc_test", "mcfadden_r2"], self.quality),
            "residuals": (["method", "bin", "mean_fitted", "mean_residual", "band", "size", "outside"],
                          self.residuals),
        }

    def detected(self, method):
        return [r["feature"] for r in self.importance_table if r["method"] == method and r["detected"]]

    def significant(self, method):
        return [r["feature"] for r in self.or_table if r["method"] == method and r["significant"]]


def _explanatory(data, keep, method, cfg):
    design = DesignMatrix(data.X[:, keep], names=[n for n, k in zip(data.names, keep) if k])
    y = data.outcome.astype(np.float64)
    if method == "ml":
        fit = fit_ml(design, y, alpha=cfg.alpha)
    elif method == "firth":
        fit = fit_firth(design, y, alpha=cfg.alpha)
    else:
        fit = fit_logf(design, y, LogFConfig(1), alpha=cfg.alpha)
    return fit


def _noise_detect(ranks, noise):
    if not noise.any():
        return np.zeros(len(ranks), dtype=bool)
    return (ranks < ranks[noise].min()) & ~noise


def run_audit(data: Dataset, cfg: AuditConfig = AuditConfig()) -> AuditReport:
    """Run both tracks on ``data`` (noise already injected, if wanted).

    Features that are constant are left out of every model and reported
    with NaN values.
    """
    y = data.outcome
    if y.min() == y.max():
        raise ValueError("audit needs both outcome classes")
    rep = AuditReport(imbalance=imbalance_summary(data))
    keep = _varying(data.X)
    noise = np.asarray(data.noise_flags, dtype=bool)
    p = data.p
    ll0 = null_log_likelihood(y.astype(np.float64))
    lines = [f"rows: {data.n}  outcome split: {rep.imbalance['outcome']}  features: {p} "
             f"({int(noise.sum())} known noise)"]
    if "ingest" in data.meta:
        lines.append(f"rows dropped for missing values: {data.meta['ingest']['rows_dropped']}")
    if not keep.all():
        lines.append("constant features left out: " + ", ".join(n for n, k in zip(data.names, keep) if not k))

    for method in (m for m in cfg.methods if m in EXPLANATORY):
        try:
            fit = _explanatory(data, keep, method, cfg)
        except Exception as exc:
            raise RuntimeError(f"audit {method} fit failed: {exc}") from exc
        vals = {k: np.full(p, np.nan) for k in ("or", "lo", "hi", "p")}
        vals["or"][keep], vals["lo"][keep], vals["hi"][keep] = fit.odds_ratios, fit.ci_lower, fit.ci_upper
        vals["p"][keep] = fit.p_values
        sig = np.zeros(p, dtype=bool)
        sig[keep] = fit.significant()
        for j, nm in enumerate(data.names):
            rep.or_table.append({"method": method, "feature": nm, "or_hat": vals["or"][j], "ci_lo": vals["lo"][j],
                                 "ci_hi": vals["hi"][j], "p_value": vals["p"][j], "significant": bool(sig[j])})
        eta = data.X[:, keep] @ fit.coefficients + fit.intercept
        prob = 1.0 / (1.0 + np.exp(-eta))
        r2 = mcfadden_r2(fit.log_likelihood, ll0)
        a = auc(eta, y)
        rep.quality.append({"method": method, "auc_train": a, "auc_test": np.nan, "mcfadden_r2": r2})
        br = binned_residuals(prob, y)
        for b in range(len(br.band)):
            rep.residuals.append({"method": method, "bin": b + 1, "mean_fitted": br.mean_fitted[b],
                                  "mean_residual": br.mean_residual[b], "band": br.band[b],
                                  "size": int(br.size[b]), "outside": bool(br.outside[b])})
        sig_names = [nm for nm, s in zip(data.names, sig) if s]
        lines.append(f"{method}: McFadden R2 {r2:.3f}  AUC {a:.3f}  significant: {', '.join(sig_names) or 'none'}"
                     f"  binned residuals outside band: {br.fraction_outside:.0%}")

    predictive = [m for m in cfg.methods if m in PREDICTIVE]
    if predictive:
        tr, te = stratified_split(y, cfg.train_frac, derive_rng(cfg.seed, "audit-split"))
        train, test = data.subset(tr), data.subset(te)
        ktr = keep & _varying(train.X)
        design = DesignMatrix(train.X[:, ktr])
        ytr = train.outcome.astype(np.float64)
        ll0_tr = null_log_likelihood(ytr)
        nets = [m for m in predictive if m in ("lasso", "ridge", "enet")]
        chosen = {}
        if nets:
            grid = set(DEFAULT_ALPHA_GRID) if "enet" in nets else set()
            grid |= {a for m, a in (("lasso", 0.0), ("ridge", 1.0)) if m in nets}
            _, details = cv_tune(design, ytr, sorted(grid), NetConfig(), rng=derive_rng(cfg.seed, "audit-cv"),
                                 return_details=True)
            for m in nets:
                chosen[m] = select_from_cv(details, {"lasso": [0.0], "ridge": [1.0]}.get(m, DEFAULT_ALPHA_GRID))
        forests = {}
        for m in predictive:
            values = np.full(p, np.nan)
            if m in chosen:
                fit = fit_net(design, ytr, chosen[m])
                sd = train.X[:, ktr].std(axis=0)
                values[ktr] = np.abs(fit.coefficients) * sd
                eta_tr = train.X[:, ktr] @ fit.coefficients + fit.intercept
                eta_te = test.X[:, ktr] @ fit.coefficients + fit.intercept
                r2 = mcfadden_r2(fit.log_likelihood, ll0_tr)
                extra = f"  alpha={chosen[m].alpha_mix:g} lambda={chosen[m].lambda_:.4g}"
            else:
                algo, measure = m.split("+")
                if algo not in forests:
                    fc = ForestConfig(n_trees=cfg.n_trees, algo=algo, seed=derive_seed(cfg.seed, "audit-forest", algo))
                    forests[algo] = fit_forest((train.X[:, ktr], train.outcome), fc)
                model = forests[algo]
                imp = importance(model, (train.X[:, ktr], train.outcome), measure)
                values[ktr] = imp.values
                eta_tr = model.predict_proba(train.X[:, ktr])
                eta_te = model.predict_proba(test.X[:, ktr])
                r2 = np.nan
                extra = ""
            ranks = rank_values(values)
            det = _noise_detect(ranks, noise)
            for j, nm in enumerate(data.names):
                rep.importance_table.append({"method": m, "feature": nm, "importance": values[j],
                                             "rank": int(ranks[j]), "detected": bool(det[j])})
            a_tr = auc(eta_tr, train.outcome)
            a_te = auc(eta_te, test.outcome) if test.outcome.min() != test.outcome.max() else np.nan
            rep.quality.append({"method": m, "auc_train": a_tr, "auc_test": a_te, "mcfadden_r2": r2})
            det_names = [nm for nm, d in zip(data.names, det) if d]
            flag = "" if a_te >= GOOD_AUC else "  (test AUC below 0.7)"
            lines.append(f"{m}: AUC train {a_tr:.3f} test {a_te:.3f}{flag}{extra}  "
                         f"above all noise: {', '.join(det_names) or 'none'}")
    rep.summary = "\n".join(lines) + "\n"
    return rep


def write_report(rep: AuditReport, out_dir) -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (cols, rows) in rep.tables().items():
        path = out_dir / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in rows:
                w.writerow([format_value(row[c]) for c in cols])
        written.append(path)
    path = out_dir / "summary.txt"
    path.write_text(rep.summary)
    written.append(path)
    return written


# bundled stand-in data

STANDIN_SCHOOL1 = {
    "name": "standin_school1",
    "n": 140,
    "outcome": "Admit",
    "outcome_minority": 0.41,
    # (name, minority fraction, odds ratio, level coded 1, level coded 0)
    "binary": [
        ("Gender", 0.21, 1.5, "F", "M"),
        ("Year", 0.43, 1.0, "Y2", "Y1"),
        ("RaceAsian", 0.13, 0.6, "yes", "no"),
        ("RaceBlack", 0.04, 2.0, "yes", "no"),
        ("RaceLatinx", 0.19, 2.0, "yes", "no"),
        ("RaceMulti", 0.04, 1.5, "yes", "no"),
    ],
    # (name, class-1 mean shift in sd units, location, scale)
    "continuous": [
        ("GREQ", 0.6, 158.0, 6.0),
        ("GREV", 0.2, 153.0, 7.0),
        ("GREP", 0.5, 680.0, 110.0),
        ("GPA", 0.4, 3.45, 0.35),
    ],
    "seed": 1401,
}


def standin_spec(profile=STANDIN_SCHOOL1) -> DatasetSpec:
    pi = profile["outcome_minority"]
    return DatasetSpec(
        n=profile["n"], pi_1plus=pi, exact_counts=True, seed=profile["seed"],
        binary_features=[(nm, ContingencySpec(q, pi, orr)) for nm, q, orr, _, _ in profile["binary"]],
        continuous_features=[(nm, ContinuousFeatureSpec(mu)) for nm, mu, _, _ in profile["continuous"]],
    )


def write_standin(path, profile=STANDIN_SCHOOL1):
    """Write a synthetic stand-in CSV plus a sidecar with its generating effects.

    The file imitates the imbalance profile of a small admissions dataset
    (string-coded categories, raw score scales). It is simulated, not real.
    """
    data = sample_dataset(standin_spec(profile))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = [profile["outcome"]] + [b[0] for b in profile["binary"]] + [c[0] for c in profile["continuous"]]
    nb = len(profile["binary"])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(data.n):
            row = ["yes" if data.outcome[i] else "no"]
            for j, (_, _, _, one, zero) in enumerate(profile["binary"]):
                row.append(one if data.X[i, j] else zero)
            for k, (_, _, loc, scale) in enumerate(profile["continuous"]):
                row.append(f"{loc + scale * data.X[i, nb + k]:.2f}")
            w.writerow(row)
    summary = imbalance_summary(data)
    meta = {
        "description": "Synthetic stand-in generated by featbias; not real applicant data.",
        "outcome": profile["outcome"],
        "n": data.n,
        "imbalance": summary,
        "spec": data.spec,
        "features": [
            {"name": nm, "kind": k, "noise": False}
            for nm, k in zip(data.names, data.feature_kinds)
        ],
        "effects": {
            "binary_odds_ratios": {b[0]: b[2] for b in profile["binary"]},
            "continuous_mean_shift_sd": {c[0]: c[1] for c in profile["continuous"]},
            "encodings": {b[0]: {b[3]: 1, b[4]: 0} for b in profile["binary"]},
        },
    }
    side = path.with_suffix(".json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path, side


def standin_path():
    return Path(__file__).with_name("data") / "standin_school1.csv"


def load_standin(outcome_column=None) -> Dataset:
    return ingest(standin_path(), outcome_column)

