"""Acceptance criteria, one test each.

Every test records a one-line PASS/FAIL verdict that the terminal summary
prints under "acceptance criteria" (see conftest.py). Run on their own with
``pytest tests/test_acceptance.py``. Criteria 5 and 6 grow full 500-tree
forests over 20 root seeds and dominate the runtime.
"""
import math
import time

import numpy as np
import pytest

from helpers import add_half_log_or, table_design

from featbias.bench import (BenchConfig, run_bench, run_bootstrap_protocol, run_forest_protocol,
                            run_regression_protocol, write_tables)
from featbias.datagen import ContingencySpec, cell_probabilities, dataset_id, paper_grid, sample_dataset
from featbias.glm import DesignMatrix, fit_ml
from featbias.penalized import LogFConfig, NetConfig, fit_firth, fit_logf, fit_net
from featbias.stats import auc, holm_bonferroni, percentile

pytestmark = pytest.mark.acceptance

VERDICTS = {}
SEEDS = range(20)


def verdict(n, ok, detail, t0):
    VERDICTS[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}  ({time.perf_counter() - t0:.1f}s)"
    assert ok, VERDICTS[n]


def cell(n, pi, seed):
    return sample_dataset(paper_grid((n,), (pi,), seed)[0])


def true_log_or(data):
    spec = data.spec
    out = {f["name"]: math.log(f["odds_ratio"]) for f in spec["binary_features"]}
    out.update({f["name"]: f["mu"] / f["sigma"] ** 2 for f in spec["continuous_features"]})
    return np.array([out[nm] for nm in data.names])


def random_tables(rng, k=50):
    tables = []
    while len(tables) < k:
        c = tuple(int(v) for v in rng.integers(0, 30, 4))
        if len(tables) % 5 == 0:  # force some separated tables
            c = (c[0], c[1], 0, c[3]) if len(tables) % 10 else (c[0], 0, c[2], c[3])
        n00, n10, n01, n11 = c
        if min(n00 + n01, n10 + n11, n00 + n10, n01 + n11) > 0:
            tables.append(c)
    return tables


def test_c01_contingency_exactness():
    t0 = time.perf_counter()
    panels = [((0.4, 0.5, 1.0), (0.30, 0.20, 0.30, 0.20)), ((0.2, 0.5, 1.0), (0.40, 0.10, 0.40, 0.10)),
              ((0.4, 0.25, 1.0), (0.45, 0.30, 0.15, 0.10)), ((0.4, 0.5, 2.79), (0.36, 0.14, 0.24, 0.26))]
    worst = 0.0
    for (a, b, orr), want in panels:
        c = cell_probabilities(ContingencySpec(a, b, orr))
        worst = max(worst, np.max(np.abs(np.array([c.pi_00, c.pi_01, c.pi_10, c.pi_11]) - want)))
    rng = np.random.default_rng(1)
    trip = 0.0
    for _ in range(2000):
        a, b = rng.uniform(0.01, 0.99, 2)
        orr = float(np.exp(rng.uniform(-3, 3)))
        c = cell_probabilities(ContingencySpec(a, b, orr))
        trip = max(trip, abs(c.pi_01 + c.pi_11 - a), abs(c.pi_10 + c.pi_11 - b),
                   abs(c.cross_ratio() - orr) / orr)
    elapsed = time.perf_counter() - t0
    verdict(1, worst <= 5e-3 and trip <= 1e-9 and elapsed < 1.0,
            f"max reference cell error {worst:.1e}, max round-trip error {trip:.1e}", t0)


def test_c02_firth_closed_form():
    t0 = time.perf_counter()
    worst = 0.0
    for c in random_tables(np.random.default_rng(2)):
        d, y = table_design(*c)
        worst = max(worst, abs(fit_firth(d, y, ci=None).coefficients[0] - add_half_log_or(*c)))
    verdict(2, worst < 1e-6, f"max |beta_firth - add-0.5 log OR| = {worst:.1e} over 50 tables", t0)


def test_c03_logf_equals_firth():
    t0 = time.perf_counter()
    worst = 0.0
    for c in random_tables(np.random.default_rng(3)):
        d, y = table_design(*c, intercept=False)
        b_f = fit_firth(d, y, ci=None).coefficients[0]
        b_l = fit_logf(d, y, LogFConfig(1), ci=None).coefficients[0]
        worst = max(worst, abs(b_f - b_l))
    verdict(3, worst < 1e-6, f"max |beta_logf - beta_firth| = {worst:.1e} over 50 tables", t0)


def test_c04_soft_threshold_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    Q, _ = np.linalg.qr(rng.standard_normal((60, 5)))
    y = Q @ rng.normal(0, 2, 5) + 0.5 * rng.standard_normal(60)
    ols = Q.T @ y
    d = DesignMatrix(Q, intercept_column=False)
    worst = 0.0
    for lam in (0.05, 0.5, 1.0, 2.0, 5.0):
        lasso = fit_net(d, y, NetConfig(lam, 0.0, family="linear", standardize=False)).coefficients
        ridge = fit_net(d, y, NetConfig(lam, 1.0, family="linear", standardize=False)).coefficients
        worst = max(worst, np.max(np.abs(lasso - np.sign(ols) * np.maximum(np.abs(ols) - lam, 0))),
                    np.max(np.abs(ridge - ols / (1 + 2 * lam))))
    verdict(4, worst < 1e-6, f"max deviation from closed forms {worst:.1e}", t0)


def test_c05_gini_bias():
    t0 = time.perf_counter()
    hits = 0
    for s in SEEDS:
        data = cell(1000, 0.5, s)
        cfg = BenchConfig(forest_pairs=(("cart", "gini"),), root_seed=s)
        rep = run_forest_protocol(data, cfg, dataset_id(data.spec)).reports[("cart", "gini")]
        cont = np.array([k == "continuous" for k in data.feature_kinds])
        hits += rep.ranks[cont].max() < rep.ranks[~cont].min()
    elapsed = time.perf_counter() - t0
    verdict(5, hits >= 18 and elapsed < 300, f"continuous all above binary in {hits}/20 seeds", t0)


def test_c06_imbalance_bias():
    t0 = time.perf_counter()
    pairs = (("cart", "perm_accuracy"), ("cif", "perm_accuracy"), ("cif", "perm_auc"))
    fracs = (0.5, 0.4, 0.3, 0.2, 0.1)
    wins = {(pi, pr): 0 for pi in fracs for pr in pairs}
    all_seed = 0
    for s in SEEDS:
        ok_seed = True
        for pi in fracs:
            data = cell(1000, pi, s)
            a, b = data.names.index("bin_OR3_50_50"), data.names.index("bin_OR3_95_5")
            res = run_forest_protocol(data, BenchConfig(forest_pairs=pairs, root_seed=s), dataset_id(data.spec))
            for pr in pairs:
                v = res.reports[pr].values
                wins[(pi, pr)] += v[a] > v[b]
                ok_seed &= bool(v[a] > v[b])
        all_seed += ok_seed
    worst = min(wins.values())
    short = ", ".join(f"{round(100 * pi)}%/{a}+{m}={w}" for (pi, (a, m)), w in wins.items() if w < 18)
    verdict(6, worst >= 18, f"50/50 > 95/5 in at least {worst}/20 seeds for every (cell, pair); "
            f"all 15 at once in {all_seed}/20" + (f"; below 18: {short}" if short else ""), t0)


def test_c07_regression_detection_scaling():
    t0 = time.perf_counter()
    small = large = 0
    cfg = BenchConfig(regression_methods=("ml",))
    for s in SEEDS:
        d100 = cell(100, 0.5, s)
        sig = run_regression_protocol(d100, replace_seed(cfg, s))["ml"].significant_holm
        allowed = np.array([nm == "cont_mu0.75" for nm in d100.names])
        small += not np.any(sig & ~allowed)
        d10k = cell(10000, 0.5, s)
        sig = run_regression_protocol(d10k, replace_seed(cfg, s))["ml"].significant_holm
        informative = ~np.asarray(d10k.noise_flags)
        large += bool(np.all(sig[informative]))
    elapsed = time.perf_counter() - t0
    verdict(7, small >= 18 and large >= 18 and elapsed < 600,
            f"N=100 subset rule {small}/20, N=10000 all {int(informative.sum())} informative {large}/20", t0)


def replace_seed(cfg, s):
    from dataclasses import replace
    return replace(cfg, root_seed=s)


def test_c08_ci_coverage():
    t0 = time.perf_counter()
    inside = total = 0
    cfg = BenchConfig(regression_methods=("ml",))
    for s in SEEDS:
        for n in (100, 1000):
            for pi in (0.5, 0.4, 0.3, 0.2, 0.1):
                data = cell(n, pi, s)
                mf = run_regression_protocol(data, replace_seed(cfg, s))["ml"]
                target = np.exp(true_log_or(data))
                inf = ~np.asarray(data.noise_flags) & ~np.isnan(mf.ci_lo)
                inside += int(np.sum((mf.ci_lo[inf] <= target[inf]) & (target[inf] <= mf.ci_hi[inf])))
                total += int(inf.sum())
    rate = inside / total
    verdict(8, rate >= 0.95, f"built-in OR inside the ML profile CI in {inside}/{total} = {rate:.3f} of fits", t0)


def test_c09_penalization_benefit():
    t0 = time.perf_counter()
    hits = 0
    cfg = BenchConfig(regression_methods=("ml", "firth", "logf"))
    for s in SEEDS:
        data = cell(100, 0.1, s)
        res = run_regression_protocol(data, replace_seed(cfg, s))
        # log-OR widths: an OR endpoint of 0 or inf is an infinite coefficient endpoint
        with np.errstate(divide="ignore"):
            width = {m: np.log(res[m].ci_hi) - np.log(res[m].ci_lo) for m in res}
        ok = True
        for nm in ("bin_OR3_90_10", "bin_OR3_95_5"):
            j = data.names.index(nm)
            ml = width["ml"][j]
            ok &= bool(width["firth"][j] < ml and width["logf"][j] < ml)
        hits += ok
    verdict(9, hits >= 18, f"Firth and Log-F narrower than ML for both rare OR=3 features in {hits}/20 seeds", t0)


def test_c10_shrinkage_direction():
    t0 = time.perf_counter()
    data = cell(100, 0.5, 0)
    cfg = BenchConfig(regression_methods=("ml", "lasso", "ridge"), bootstrap_reps=200, root_seed=0)
    res = run_bootstrap_protocol(data, cfg, dataset_id(data.spec))
    bad = []
    med = {m: np.array([s.median if s else np.nan for s in res.summaries[m]]) for m in ("ml", "lasso", "ridge")}
    for j, nm in enumerate(data.names):
        if nm.startswith("bin_OR3_"):
            for m in ("lasso", "ridge"):
                if not med[m][j] <= med["ml"][j]:
                    bad.append(f"{m}:{nm}")
    verdict(10, not bad, "lasso and ridge medians <= ML median for all OR=3 features"
            + (f"; violations {bad}" if bad else ""), t0)


def test_c11_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = BenchConfig(sizes=(100,), outcome_fractions=(0.5, 0.2), forest_repeats=3, n_trees=50, bootstrap_reps=4,
                      enet_alpha_grid=(0.0, 0.5, 1.0), lambda_path_len=20, cv_folds=5,
                      bootstrap_cells=((100, 0.2),), root_seed=11)
    for t in (1, 4):
        write_tables(run_bench(cfg, threads=t), tmp_path / f"t{t}")
    same = all((tmp_path / "t1" / f).read_bytes() == (tmp_path / "t4" / f).read_bytes()
               for f in ("rank_table.csv", "ci_table.csv", "bootstrap_table.csv", "model_quality.csv"))
    verdict(11, same, "four tables byte-identical for 1 and 4 threads", t0)


def _holm_brute(p, alpha):
    m = len(p)
    order = sorted(range(m), key=lambda i: (p[i], i))
    reject = [False] * m
    for k, i in enumerate(order):
        if (m - k) * p[i] >= alpha:  # strict rule: reject while (m - k + 1) p_(k) < alpha, 1-based
            break
        reject[i] = True
    return reject


def test_c12_statistical_utilities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(12)
    bad = {"auc": 0, "holm": 0, "percentile": 0}
    for _ in range(100):
        n = int(rng.integers(2, 15))
        y = rng.integers(0, 2, n)
        y[:2] = [0, 1]
        s = rng.integers(0, 5, n).astype(float)
        pos, neg = s[y == 1], s[y == 0]
        brute = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg) / (len(pos) * len(neg))
        bad["auc"] += int(auc(s, y) != brute)
        p = rng.choice([0.001, 0.004, 0.01, 0.0125, 0.02, 0.05, 0.2, 0.7], int(rng.integers(1, 10)))
        _, rej = holm_bonferroni(p, 0.05)
        bad["holm"] += int(list(rej) != _holm_brute(list(p), 0.05))
        x = np.sort(rng.normal(size=int(rng.integers(1, 12))))
        q = float(rng.choice([0.0, 0.025, 0.5, 0.975, 1.0, rng.random()]))
        h = (len(x) - 1) * q
        lo = math.floor(h)
        hi = min(lo + 1, len(x) - 1)
        bad["percentile"] += int(percentile(x, q) != x[lo] + (h - lo) * (x[hi] - x[lo]))
    verdict(12, not any(bad.values()), f"mismatches over 100 instances each: {bad}", t0)
