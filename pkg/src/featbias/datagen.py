"""Synthetic tabular data with controlled imbalance and odds ratios.

A binary feature is specified by its minority fraction, the outcome minority
fraction and the feature-outcome odds ratio; these pin down the 2x2 table of
cell fractions. Continuous features are normal with a mean shift in the
``Y = 1`` class. Features are drawn independently given the outcome.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BINARY = "binary"
CONTINUOUS = "continuous"

PAPER_FEATURE_FRACTIONS = (0.5, 0.4, 0.25, 0.1, 0.05)
PAPER_ODDS_RATIOS = (3.0, 1.5, 1.0)
PAPER_MUS = (0.75, 0.50, 0.0, 0.0, 0.0)
PAPER_SIZES = (100, 1000, 10000)
PAPER_OUTCOME_FRACTIONS = (0.5, 0.4, 0.3, 0.2, 0.1)


class InfeasibleSpecError(ValueError):
    """Raised when a requested table has a cell outside ``[0, 1]``."""

    def __init__(self, cell, value):
        super().__init__(f"infeasible contingency spec: cell {cell} = {value!r} lies outside [0, 1]")
        self.cell = cell
        self.value = value


@dataclass(frozen=True)
class ContingencySpec:
    """Target margins and odds ratio of one binary feature.

    Parameters
    ----------
    pi_plus1 : float
        Fraction of cases with ``x = 1`` (the feature minority class).
    pi_1plus : float
        Fraction of cases with ``Y = 1`` (the outcome minority class).
    odds_ratio : float
        ``(pi_00 * pi_11) / (pi_10 * pi_01)``.
    """

    pi_plus1: float
    pi_1plus: float
    odds_ratio: float

    def __post_init__(self):
        if not 0.0 < self.pi_plus1 < 1.0:
            raise ValueError(f"pi_plus1 must lie in (0, 1), got {self.pi_plus1}")
        if not 0.0 < self.pi_1plus < 1.0:
            raise ValueError(f"pi_1plus must lie in (0, 1), got {self.pi_1plus}")
        if not self.odds_ratio > 0.0 or not math.isfinite(self.odds_ratio):
            raise ValueError(f"odds_ratio must be positive and finite, got {self.odds_ratio}")


@dataclass(frozen=True)
class CellProbabilities:
    """2x2 cell fractions; first index is ``Y``, second is ``x``."""

    pi_00: float
    pi_01: float
    pi_10: float
    pi_11: float

    def as_table(self):
        return np.array([[self.pi_00, self.pi_01], [self.pi_10, self.pi_11]])

    def cross_ratio(self):
        return (self.pi_00 * self.pi_11) / (self.pi_10 * self.pi_01)

    def p_x1_given_y1(self):
        return self.pi_11 / (self.pi_10 + self.pi_11)

    def p_x1_given_y0(self):
        return self.pi_01 / (self.pi_00 + self.pi_01)


@dataclass(frozen=True)
class ContinuousFeatureSpec:
    """Normal feature: ``N(0, 1)`` when ``Y = 0`` and ``N(mu, sigma)`` when ``Y = 1``."""

    mu: float
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class DatasetSpec:
    n: int
    pi_1plus: float
    binary_features: tuple = ()
    continuous_features: tuple = ()
    seed: int = 0
    exact_counts: bool = False

    def __post_init__(self):
        object.__setattr__(self, "binary_features", tuple(tuple(b) for b in self.binary_features))
        object.__setattr__(self, "continuous_features", tuple(tuple(c) for c in self.continuous_features))
        if self.n < 0:
            raise ValueError("n must be nonnegative")
        if not 0.0 < self.pi_1plus < 1.0:
            raise ValueError(f"pi_1plus must lie in (0, 1), got {self.pi_1plus}")
        names = [nm for nm, _ in self.binary_features] + [nm for nm, _ in self.continuous_features]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        for name, cs in self.binary_features:
            if not math.isclose(cs.pi_1plus, self.pi_1plus, rel_tol=0, abs_tol=1e-12):
                raise ValueError(f"binary feature {name!r} has pi_1plus {cs.pi_1plus}, dataset has {self.pi_1plus}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def feature_names(self):
        return [nm for nm, _ in self.binary_features] + [nm for nm, _ in self.continuous_features]

    def to_dict(self):
        return {
            "n": self.n,
            "pi_1plus": self.pi_1plus,
            "seed": int(self.seed),
            "exact_counts": self.exact_counts,
            "binary_features": [
                {"name": nm, "pi_plus1": cs.pi_plus1, "odds_ratio": cs.odds_ratio}
                for nm, cs in self.binary_features
            ],
            "continuous_features": [
                {"name": nm, "mu": cf.mu, "sigma": cf.sigma} for nm, cf in self.continuous_features
            ],
        }

    @classmethod
    def from_dict(cls, d):
        pi = float(d["pi_1plus"])
        return cls(
            n=int(d["n"]),
            pi_1plus=pi,
            seed=int(d.get("seed", 0)),
            exact_counts=bool(d.get("exact_counts", False)),
            binary_features=[
                (b["name"], ContingencySpec(float(b["pi_plus1"]), pi, float(b["odds_ratio"])))
                for b in d.get("binary_features", [])
            ],
            continuous_features=[
                (c["name"], ContinuousFeatureSpec(float(c["mu"]), float(c.get("sigma", 1.0))))
                for c in d.get("continuous_features", [])
            ],
        )


@dataclass
class Dataset:
    """Design matrix with a binary outcome and per-feature metadata.

    ``X`` has one column per feature, in the order of ``names``.
    """

    outcome: np.ndarray
    X: np.ndarray
    names: list
    feature_kinds: list
    noise_flags: list
    spec: dict | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.outcome = np.asarray(self.outcome, dtype=np.int8)
        X = np.asarray(self.X, dtype=np.float64)
        self.X = X.reshape(len(self.outcome), len(self.names)) if X.ndim != 2 else X
        if self.X.shape[0] != len(self.outcome):
            raise ValueError("outcome and feature matrix differ in length")
        n, p = self.X.shape
        if not (len(self.names) == len(self.feature_kinds) == len(self.noise_flags) == p):
            raise ValueError("feature metadata does not match the number of columns")
        if len(set(self.names)) != p:
            raise ValueError("feature names must be unique")
        for j, kind in enumerate(self.feature_kinds):
            if kind == BINARY and not np.all((self.X[:, j] == 0) | (self.X[:, j] == 1)):
                raise ValueError(f"binary column {self.names[j]!r} has values other than 0/1")
        if not np.all((self.outcome == 0) | (self.outcome == 1)):
            raise ValueError("outcome must be 0/1")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def column(self, name):
        return self.X[:, self.names.index(name)]

    def subset(self, rows):
        rows = np.asarray(rows)
        return Dataset(self.outcome[rows], self.X[rows], list(self.names), list(self.feature_kinds),
                       list(self.noise_flags), self.spec, dict(self.meta))

    def with_columns(self, X_new, names, kinds, noise):
        return Dataset(self.outcome, np.column_stack([self.X, X_new]) if len(names) else self.X,
                       self.names + list(names), self.feature_kinds + list(kinds),
                       self.noise_flags + list(noise), self.spec, dict(self.meta))

    def metadata(self):
        return {
            "outcome": "Y",
            "n": self.n,
            "features": [
                {"name": nm, "kind": k, "noise": bool(z)}
                for nm, k, z in zip(self.names, self.feature_kinds, self.noise_flags)
            ],
            "spec": self.spec,
            **({"meta": self.meta} if self.meta else {}),
        }


def cell_probabilities(spec: ContingencySpec) -> CellProbabilities:
    """Solve the 2x2 table of fractions for the margins and odds ratio in ``spec``."""
    a = spec.pi_plus1
    b = spec.pi_1plus
    orr = spec.odds_ratio
    if orr == 1.0:
        p11 = a * b
    else:
        s = 1.0 + (a + b) * (orr - 1.0)
        q = math.sqrt(s * s + 4.0 * orr * (1.0 - orr) * a * b)
        if s > 0:
            # same root, rationalized to avoid cancellation in s - q
            p11 = 2.0 * orr * a * b / (s + q)
        else:
            p11 = (s - q) / (2.0 * (orr - 1.0))
    p10 = b - p11
    p01 = a - p11
    p00 = 1.0 - p10 - p01 - p11
    for name, v in (("pi_00", p00), ("pi_01", p01), ("pi_10", p10), ("pi_11", p11)):
        if not 0.0 <= v <= 1.0:
            raise InfeasibleSpecError(name, v)
    return CellProbabilities(p00, p01, p10, p11)


def _bernoulli_column(rng, y, q1, q0, exact):
    n = len(y)
    if not exact:
        u = rng.random(n)
        return np.where(y == 1, u < q1, u < q0).astype(np.float64)
    x = np.zeros(n)
    for cls, q in ((1, q1), (0, q0)):
        idx = np.flatnonzero(y == cls)
        k = int(round(q * len(idx)))
        x[rng.permutation(idx)[:k]] = 1.0
    return x


def sample_dataset(spec: DatasetSpec) -> Dataset:
    """Draw one dataset from ``spec``; identical specs give identical data."""
    root = np.random.SeedSequence(int(spec.seed))
    streams = root.spawn(1 + len(spec.binary_features) + len(spec.continuous_features))
    n = spec.n
    rng_y = np.random.default_rng(streams[0])
    if spec.exact_counts:
        y = np.zeros(n, dtype=np.int8)
        y[rng_y.permutation(n)[: int(round(spec.pi_1plus * n))]] = 1
    else:
        y = (rng_y.random(n) < spec.pi_1plus).astype(np.int8)

    cols, names, kinds, noise = [], [], [], []
    k = 1
    for name, cs in spec.binary_features:
        cells = cell_probabilities(cs)
        rng = np.random.default_rng(streams[k])
        k += 1
        cols.append(_bernoulli_column(rng, y, cells.p_x1_given_y1(), cells.p_x1_given_y0(), spec.exact_counts))
        names.append(name)
        kinds.append(BINARY)
        noise.append(cs.odds_ratio == 1.0)
    for name, cf in spec.continuous_features:
        rng = np.random.default_rng(streams[k])
        k += 1
        z = rng.standard_normal(n)
        cols.append(np.where(y == 1, cf.mu + cf.sigma * z, z))
        names.append(name)
        kinds.append(CONTINUOUS)
        noise.append(cf.mu == 0.0)
    X = np.column_stack(cols) if cols else np.empty((n, 0))
    return Dataset(y, X, names, kinds, noise, spec=spec.to_dict())


def _pct(q):
    return f"{round(100 * (1 - q), 6):g}_{round(100 * q, 6):g}"


def binary_feature_name(odds_ratio, pi_plus1):
    return f"bin_OR{odds_ratio:g}_{_pct(pi_plus1)}"


def paper_features(pi_1plus):
    binary = [
        (binary_feature_name(orr, a), ContingencySpec(a, pi_1plus, orr))
        for orr in PAPER_ODDS_RATIOS
        for a in PAPER_FEATURE_FRACTIONS
    ]
    cont = []
    n_noise = 0
    for mu in PAPER_MUS:
        if mu == 0.0:
            n_noise += 1
            name = f"cont_noise{n_noise}"
        else:
            name = f"cont_mu{mu:g}"
        cont.append((name, ContinuousFeatureSpec(mu)))
    return binary, cont


def paper_spec(n, pi_1plus, seed=0):
    binary, cont = paper_features(pi_1plus)
    return DatasetSpec(n=n, pi_1plus=pi_1plus, binary_features=binary, continuous_features=cont, seed=seed)


def paper_grid(sizes=PAPER_SIZES, outcome_fractions=PAPER_OUTCOME_FRACTIONS, root_seed=0):
    """The 3 x 5 simulation grid, each cell with 15 binary and 5 continuous features.

    Cell seeds derive from ``root_seed`` and the cell's (size, imbalance)
    coordinates, so sub-grids reuse the same data as the full grid.
    """
    from .seeding import derive_seed

    return [
        paper_spec(n, pi, derive_seed(root_seed, "cell", n, int(round(pi * 1000))))
        for n in sizes
        for pi in outcome_fractions
    ]


def dataset_id(spec):
    """Short label such as ``N1000_50_50``."""
    d = spec.to_dict() if isinstance(spec, DatasetSpec) else spec
    return f"N{d['n']}_{_pct(d['pi_1plus'])}"


def _fmt(v):
    if v == int(v) and abs(v) < 2**53:
        return str(int(v))
    return repr(float(v))


def dataset_to_csv(data: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["Y"] + list(data.names))
    for i in range(data.n):
        w.writerow([int(data.outcome[i])] + [_fmt(v) for v in data.X[i]])
    return buf.getvalue()


def write_dataset(data: Dataset, path) -> tuple:
    """Write ``path`` (CSV) and ``path`` with ``.json`` suffix (metadata sidecar)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dataset_to_csv(data))
    side = path.with_suffix(".json")
    side.write_text(json.dumps(data.metadata(), indent=2, sort_keys=True) + "\n")
    return path, side


def read_dataset(path) -> Dataset:
    """Read a CSV written by :func:`write_dataset` together with its sidecar."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    with path.open() as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    arr = np.array(body, dtype=np.float64).reshape(len(body), len(header))
    feats = meta["features"]
    names = [f["name"] for f in feats]
    if header[1:] != names:
        raise ValueError(f"{path}: header does not match sidecar feature list")
    return Dataset(arr[:, 0].astype(np.int8), arr[:, 1:], names, [f["kind"] for f in feats],
                   [bool(f["noise"]) for f in feats], spec=meta.get("spec"), meta=meta.get("meta", {}))


__all__ = [
    "BINARY", "CONTINUOUS", "CellProbabilities", "ContingencySpec", "ContinuousFeatureSpec",
    "Dataset", "DatasetSpec", "InfeasibleSpecError", "cell_probabilities", "dataset_id",
    "paper_grid", "paper_spec", "read_dataset", "sample_dataset", "write_dataset",
]
