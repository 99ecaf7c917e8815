"""Time the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--n 1000] [--trees 20] [--repeat 3]

Each kernel runs on the same inputs under both backends; the script
reports the best wall time of ``--repeat`` runs, the speedup, and the
largest difference between the two outputs.
"""
import argparse
import time

import numpy as np
from scipy.stats import chi2

from featbias.datagen import paper_spec, sample_dataset
from featbias.kernels import get_backend
from featbias.penalized import _init_intercept, _prepare, lambda_grid, lambda_max
from featbias.glm import DesignMatrix
from featbias.seeding import tree_seeds


def best_time(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def cases(n, trees):
    data = sample_dataset(paper_spec(n, 0.5, seed=11))
    X, y = data.X, data.outcome.astype(np.int32)
    p = X.shape[1]
    Xc = np.ascontiguousarray(X.T).ravel()
    seeds = tree_seeds(5, trees)
    crit = float(chi2.ppf(1 - 0.05 / 5, 1))
    n_sub = int(round(0.632 * n))

    def forest(k, algo):
        return k.build_forest(Xc, n, p, y, algo, algo, n_sub, 5, 1 if algo == 0 else 7, crit if algo else 0.0, seeds)

    design = DesignMatrix(X)
    yf = y.astype(np.float64)
    sc = _prepare(design, True)
    lams = lambda_grid(lambda_max(design, yf, 0.5), 100, 4.0)

    def cd(k):
        return k.cd_path(sc.Xc, n, p, yf, design.weights, lams, 0.5, sc.penalized, 0, True, 1e-7, 200, 2000,
                         _init_intercept(design, yf, "logistic"), np.zeros(p))

    def perm(k, nodes, measure):
        return k.perm_importance(Xc, n, p, y, nodes["feature"], nodes["threshold"], nodes["left"], nodes["right"],
                                 nodes["value"], nodes["offsets"], nodes["inbag"], measure, np.uint64(5), 1)

    comp = get_backend("compiled")
    cart_nodes, cif_nodes = forest(comp, 0), forest(comp, 1)
    return {
        "build_forest[cart]": (lambda k: forest(k, 0), lambda o: o["value"]),
        "build_forest[cif]": (lambda k: forest(k, 1), lambda o: o["value"]),
        "perm_importance[acc]": (lambda k: perm(k, cart_nodes, 0), np.asarray),
        "perm_importance[auc]": (lambda k: perm(k, cif_nodes, 1), np.asarray),
        "cd_path[enet]": (cd, lambda o: np.asarray(o[1])),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--trees", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    comp, py = get_backend("compiled"), get_backend("python")
    print(f"{'kernel':24s} {'compiled s':>11s} {'python s':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, (run, pick) in cases(args.n, args.trees).items():
        tc, oc = best_time(lambda: run(comp), args.repeat)
        tp, op = best_time(lambda: run(py), 1)
        a, b = pick(oc), pick(op)
        diff = float(np.nanmax(np.abs(a - b))) if a.shape == b.shape and a.size else float("nan")
        print(f"{name:24s} {tc:11.4f} {tp:10.4f} {tp / tc:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
