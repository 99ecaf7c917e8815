"""Command-line entry point: ``featbias {gen,fit,forest,bench,audit}``.

Exit status is 0 on success, 1 on a runtime failure and 2 on a usage or
configuration error. Progress goes to standard error; standard output is
used only by ``--print-config``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .audit import EncodingError
from .datagen import DatasetSpec, InfeasibleSpecError, dataset_id, paper_grid, sample_dataset, write_dataset

MEASURE_FLAGS = {"gini": "gini", "perm-acc": "perm_accuracy", "perm-auc": "perm_auc"}


class ConfigError(Exception):
    """Bad user input detected after argument parsing (exit status 2)."""


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config: dict
    root_seed: int | None = None
    tool_version: str = __version__
    started: str = field(default_factory=_now)
    finished: str | None = None
    outputs: list = field(default_factory=list)

    @property
    def config_hash(self):
        blob = json.dumps(self.config, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def write(self, out_dir):
        """Write ``manifest.json`` into ``out_dir`` via a rename, so it appears complete or not at all."""
        self.finished = _now()
        out_dir = Path(out_dir)
        rec = asdict(self)
        rec["config_hash"] = self.config_hash
        rec["outputs"] = [str(Path(p).relative_to(out_dir)) if Path(p).is_relative_to(out_dir) else str(p)
                          for p in self.outputs]
        tmp = out_dir / ".manifest.json.tmp"
        tmp.write_text(json.dumps(rec, indent=2, sort_keys=True, default=str) + "\n")
        os.replace(tmp, out_dir / "manifest.json")
        return out_dir / "manifest.json"


def _progress(msg):
    print(msg, file=sys.stderr, flush=True)


def _load_structured(path):
    with open(path) as fh:
        raw = yaml.safe_load(fh)  # also reads JSON
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping")
    return raw


def _write_rows(path, cols, rows):
    from .bench import format_value

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([format_value(r[c]) for c in cols])
    return path


# subcommands

def cmd_gen(args):
    if args.paper_grid:
        out_dir = Path(args.out_dir or ".")
        out_dir.mkdir(parents=True, exist_ok=True)
        sizes = tuple(args.sizes) if args.sizes else (100, 1000, 10000)
        man = RunManifest("gen", {"paper_grid": True, "sizes": list(sizes), "root_seed": args.seed}, args.seed)
        for spec in paper_grid(sizes, root_seed=args.seed):
            _progress(f"gen {dataset_id(spec)}")
            man.outputs.extend(write_dataset(sample_dataset(spec), out_dir / f"{dataset_id(spec)}.csv"))
        man.write(out_dir)
        return 0
    if not args.spec or not args.out:
        raise ConfigError("gen needs --spec and --out, or --paper-grid")
    raw = _load_structured(args.spec)
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        spec = DatasetSpec.from_dict(raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{args.spec}: invalid dataset spec: {exc}") from exc
    data = sample_dataset(spec)
    out = Path(args.out)
    files = write_dataset(data, out)
    man = RunManifest("gen", spec.to_dict(), int(spec.seed), outputs=list(files))
    man.write(out.parent)
    return 0


def _read_data(args):
    from .audit import ingest

    return ingest(args.data, args.outcome)


def cmd_fit(args):
    from .bench import _varying
    from .glm import DesignMatrix, fit_ml
    from .penalized import LogFConfig, NetConfig, cv_tune, fit_firth, fit_logf, fit_net, select_from_cv
    from .seeding import derive_rng

    data = _read_data(args)
    keep = _varying(data.X)
    design = DesignMatrix(data.X[:, keep], names=[n for n, k in zip(data.names, keep) if k])
    y = data.outcome.astype(np.float64)
    m = args.method
    if m == "ml":
        fit = fit_ml(design, y, ci=args.ci, alpha=args.alpha)
    elif m == "firth":
        fit = fit_firth(design, y, ci=args.ci, alpha=args.alpha)
    elif m == "logf":
        fit = fit_logf(design, y, LogFConfig(args.logf_m), ci=args.ci, alpha=args.alpha)
    else:
        grid = {"lasso": [0.0], "ridge": [1.0]}.get(m, [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
        _, details = cv_tune(design, y, grid, NetConfig(), rng=derive_rng(args.seed, "cv"), return_details=True)
        fit = fit_net(design, y, select_from_cv(details, grid))
    p = data.p
    rows = []
    idx = np.flatnonzero(keep)
    pos = {int(j): i for i, j in enumerate(idx)}
    for j, nm in enumerate(data.names):
        i = pos.get(j)
        get = (lambda a: float(a[i]) if a is not None and i is not None else float("nan"))
        rows.append({"feature": nm, "coef": get(fit.coefficients), "or_hat": get(fit.odds_ratios),
                     "ci_lo": get(fit.ci_lower), "ci_hi": get(fit.ci_upper), "p_value": get(fit.p_values),
                     "significant": bool(fit.significant()[i]) if fit.ci_lower is not None and i is not None else False,
                     "separation": bool(fit.separated[i]) if i is not None else True})
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = _write_rows(out_dir / "fit_table.csv",
                       ["feature", "coef", "or_hat", "ci_lo", "ci_hi", "p_value", "significant", "separation"], rows)
    info = {"method": fit.method, "intercept": fit.intercept, "log_likelihood": fit.log_likelihood,
            "converged": fit.converged, "separation_detected": fit.separation_detected, "n": data.n, "p": p,
            "extra": {k: v for k, v in fit.extra.items() if isinstance(v, (int, float, bool, str))}}
    (out_dir / "fit_info.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    RunManifest("fit", cfg, args.seed, outputs=[path, out_dir / "fit_info.json"]).write(out_dir)
    _progress(f"fit {m}: {data.n} rows, {int(keep.sum())} features")
    return 0


def cmd_forest(args):
    from .bench import BenchConfig, RANK_COLUMNS, pair_name, run_forest_protocol

    data = _read_data(args)
    mtry = None if args.mtry == "sqrt" else int(args.mtry)
    pairs = [(args.algo, MEASURE_FLAGS[m]) for m in args.importance]
    try:
        cfg = BenchConfig(forest_repeats=args.reps, forest_split=args.split, n_trees=args.ntree, mtry=mtry,
                          forest_pairs=pairs, root_seed=args.seed, grid=())
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    res = run_forest_protocol(data, cfg, cell="data")
    rows = []
    for pair, rep in res.reports.items():
        for j, nm in enumerate(data.names):
            rows.append({"dataset": "data", "pair": pair_name(pair), "feature": nm,
                         "mean_importance": rep.values[j], "rank": int(rep.ranks[j]),
                         "detected": bool(rep.detected[j])})
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = _write_rows(out_dir / "rank_table.csv", RANK_COLUMNS, rows)
    q = [{"method": args.algo, "auc_train": res.auc_train[args.algo], "auc_test": res.auc_test[args.algo]}]
    qpath = _write_rows(out_dir / "model_quality.csv", ["method", "auc_train", "auc_test"], q)
    cfg_d = {k: v for k, v in vars(args).items() if k != "func"}
    RunManifest("forest", cfg_d, args.seed, outputs=[path, qpath]).write(out_dir)
    return 0


def _bench_config(args):
    from .bench import load_config, profile_config

    try:
        if args.config:
            cfg = load_config(args.config, args.profile)
        else:
            cfg = profile_config(args.profile or "desk")
        if args.seed is not None:
            from dataclasses import replace

            cfg = replace(cfg, root_seed=args.seed)
    except (ValueError, TypeError, KeyError, yaml.YAMLError, InfeasibleSpecError) as exc:
        raise ConfigError(f"invalid bench config: {exc}") from exc
    return cfg


def cmd_bench(args):
    from .bench import dump_config, run_bench, write_tables

    cfg = _bench_config(args)
    if args.print_config:
        sys.stdout.write(dump_config(cfg))
        return 0
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    out_dir = Path(args.out_dir)
    man = RunManifest("bench", cfg.to_dict(), int(cfg.root_seed))
    t0 = time.time()
    res = run_bench(cfg, threads=args.threads, progress=lambda m: _progress(f"[{time.time() - t0:7.1f}s] {m}"))
    man.outputs = write_tables(res, out_dir)
    (out_dir / "config.yaml").write_text(dump_config(cfg))
    man.outputs.append(out_dir / "config.yaml")
    man.write(out_dir)
    _progress(f"bench done in {time.time() - t0:.1f}s")
    return 0


def cmd_audit(args):
    from .audit import AuditConfig, inject_noise, run_audit, write_report

    data = _read_data(args)
    if args.add_noise == "default":
        cfg = AuditConfig(outcome_column=data.meta["ingest"]["outcome"], seed=args.seed, n_trees=args.ntree)
    else:
        cfg = AuditConfig(outcome_column=data.meta["ingest"]["outcome"], binary_noise_imbalances=(),
                          n_continuous_noise=0, seed=args.seed, n_trees=args.ntree)
    data = inject_noise(data, cfg)
    rep = run_audit(data, cfg)
    out_dir = Path(args.out_dir)
    files = write_report(rep, out_dir)
    cfg_d = {k: v for k, v in vars(args).items() if k != "func"}
    RunManifest("audit", cfg_d, args.seed, outputs=files).write(out_dir)
    sys.stderr.write(rep.summary)
    return 0


def _u64(s):
    v = int(s)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _fraction(s):
    v = float(s)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return v


def _positive(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _mtry(s):
    if s == "sqrt":
        return s
    return str(_positive(s))


def build_parser():
    ap = argparse.ArgumentParser(prog="featbias", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"featbias {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate synthetic datasets")
    g.add_argument("--spec", help="dataset spec (YAML or JSON)")
    g.add_argument("--out", help="output CSV path")
    g.add_argument("--paper-grid", action="store_true", help="write the full simulation grid")
    g.add_argument("--sizes", type=_positive, nargs="+", help="grid sample sizes (default 100 1000 10000)")
    g.add_argument("--out-dir", help="output directory for --paper-grid")
    g.add_argument("--seed", type=_u64, default=None)
    g.set_defaults(func=cmd_gen)

    def data_args(p):
        p.add_argument("--data", required=True, help="input CSV")
        p.add_argument("--outcome", default=None, help="outcome column (default: sidecar or 'Y')")
        p.add_argument("--out-dir", required=True)
        p.add_argument("--seed", type=_u64, default=0)

    f = sub.add_parser("fit", help="fit one regression method")
    data_args(f)
    f.add_argument("--method", choices=("ml", "firth", "logf", "lasso", "ridge", "enet"), default="ml")
    f.add_argument("--ci", choices=("profile", "wald"), default="profile")
    f.add_argument("--alpha", type=_fraction, default=0.05)
    f.add_argument("--logf-m", type=int, default=1)
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("forest", help="repeated forest fits with importances")
    data_args(r)
    r.add_argument("--algo", choices=("cart", "cif"), default="cart")
    r.add_argument("--importance", choices=tuple(MEASURE_FLAGS), nargs="+", default=["perm-acc"])
    r.add_argument("--ntree", type=_positive, default=500)
    r.add_argument("--mtry", type=_mtry, default="sqrt")
    r.add_argument("--reps", type=_positive, default=30)
    r.add_argument("--split", type=_fraction, default=0.7)
    r.set_defaults(func=cmd_forest)

    b = sub.add_parser("bench", help="run the simulation protocols")
    b.add_argument("--config", help="YAML config; keys mirror BenchConfig")
    b.add_argument("--profile", choices=("desk", "paper"), default=None)
    b.add_argument("--out-dir", default="bench_out")
    b.add_argument("--threads", type=int, default=1)
    b.add_argument("--seed", type=_u64, default=None, help="override root_seed")
    b.add_argument("--print-config", action="store_true", help="print the effective config and exit")
    b.set_defaults(func=cmd_bench)

    a = sub.add_parser("audit", help="audit a real dataset with injected noise features")
    data_args(a)
    a.add_argument("--add-noise", choices=("default", "none"), default="default")
    a.add_argument("--ntree", type=_positive, default=500)
    a.set_defaults(func=cmd_audit)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)  # exits with status 2 on usage errors
    if args.command == "forest" and "gini" in args.importance and args.algo == "cif":
        ap.error("gini importance needs --algo cart")
    try:
        return args.func(args)
    except (ConfigError, InfeasibleSpecError, EncodingError, FileNotFoundError) as exc:
        print(f"featbias {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"featbias {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
