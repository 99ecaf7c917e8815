import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from featbias.datagen import (BINARY, CONTINUOUS, ContingencySpec, ContinuousFeatureSpec, DatasetSpec,
                              InfeasibleSpecError, cell_probabilities, dataset_id, paper_grid, paper_spec,
                              read_dataset, sample_dataset, write_dataset)

# bisection on the cross-ratio over the Frechet interval, frozen before the closed form was written
PI11_ORACLE_005_01_3 = 0.011750897846458306


def bisect_pi11(a, b, orr, iters=200):
    lo, hi = max(0.0, a + b - 1.0), min(a, b)

    def g(p11):
        p10, p01 = b - p11, a - p11
        p00 = 1 - p10 - p01 - p11
        return p00 * p11 - orr * p10 * p01   # increasing in p11

    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@pytest.mark.parametrize("a,b,orr,expected", [
    (0.4, 0.5, 1.0, (0.30, 0.20, 0.30, 0.20)),
    (0.2, 0.5, 1.0, (0.40, 0.10, 0.40, 0.10)),
    (0.4, 0.25, 1.0, (0.45, 0.30, 0.15, 0.10)),
    (0.4, 0.5, 2.79, (0.36, 0.14, 0.24, 0.26)),
])
def test_reference_tables(a, b, orr, expected):
    c = cell_probabilities(ContingencySpec(a, b, orr))
    assert np.allclose([c.pi_00, c.pi_01, c.pi_10, c.pi_11], expected, atol=5e-3)


def test_bisection_oracle():
    c = cell_probabilities(ContingencySpec(0.05, 0.1, 3.0))
    assert bisect_pi11(0.05, 0.1, 3.0) == pytest.approx(PI11_ORACLE_005_01_3, abs=1e-15)
    assert c.pi_11 == pytest.approx(PI11_ORACLE_005_01_3, abs=1e-14)


def test_independence_exact():
    c = cell_probabilities(ContingencySpec(0.25, 0.3, 1.0))
    assert c.pi_11 == 0.25 * 0.3


fractions = st.floats(0.01, 0.99)
ors = st.floats(0.05, 50.0)


@settings(max_examples=300, deadline=None)
@given(fractions, fractions, ors)
def test_cell_invariants(a, b, orr):
    c = cell_probabilities(ContingencySpec(a, b, orr))
    cells = np.array([c.pi_00, c.pi_01, c.pi_10, c.pi_11])
    assert np.all((cells >= 0) & (cells <= 1))
    assert abs(cells.sum() - 1) < 1e-12
    assert abs(c.pi_11 + c.pi_01 - a) < 1e-12
    assert abs(c.pi_11 + c.pi_10 - b) < 1e-12
    assert max(0.0, a + b - 1) - 1e-15 <= c.pi_11 <= min(a, b) + 1e-15
    if cells.min() > 1e-6:
        assert c.cross_ratio() == pytest.approx(orr, rel=1e-9)
    assert c.pi_11 == pytest.approx(bisect_pi11(a, b, orr), abs=1e-12)


@pytest.mark.parametrize("bad", [(0.0, 0.5, 2.0), (0.5, 1.0, 2.0), (0.5, 0.5, 0.0), (0.5, 0.5, -1.0)])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        ContingencySpec(*bad)


def test_infeasible_names_cell(monkeypatch):
    # a table with a negative cell cannot come from valid margins, so force one through the solver
    import featbias.datagen as dg

    monkeypatch.setattr(dg.math, "sqrt", lambda x: -1e3)
    with pytest.raises(InfeasibleSpecError) as err:
        cell_probabilities(ContingencySpec(0.3, 0.4, 2.0))
    assert "pi_" in str(err.value)


def test_continuous_sigma_positive():
    with pytest.raises(ValueError):
        ContinuousFeatureSpec(0.5, 0.0)


def test_dataset_spec_checks():
    with pytest.raises(ValueError):
        DatasetSpec(10, 0.5, [("a", ContingencySpec(0.3, 0.4, 2.0))])
    with pytest.raises(ValueError):
        DatasetSpec(10, 0.5, [("a", ContingencySpec(0.3, 0.5, 2.0))], [("a", ContinuousFeatureSpec(1.0))])


def test_empty_dataset():
    d = sample_dataset(paper_spec(0, 0.5))
    assert d.n == 0 and d.p == 20


def test_paper_grid_layout():
    grid = paper_grid()
    assert len(grid) == 15
    for spec in grid:
        assert len(spec.binary_features) == 15
        assert [cf.mu for _, cf in spec.continuous_features] == [0.75, 0.5, 0.0, 0.0, 0.0]
        ors = sorted({cs.odds_ratio for _, cs in spec.binary_features})
        assert ors == [1.0, 1.5, 3.0]
    assert dataset_id(grid[0]) == "N100_50_50"
    assert dataset_id(grid[-1]) == "N10000_90_10"
    # sub-grids reuse the full grid's cell seeds
    assert paper_grid((1000,), (0.3,))[0].seed == grid[7].seed


def test_feature_metadata():
    d = sample_dataset(paper_spec(50, 0.3, seed=4))
    assert d.names[0] == "bin_OR3_50_50" and d.names[14] == "bin_OR1_95_5"
    assert d.names[15:] == ["cont_mu0.75", "cont_mu0.5", "cont_noise1", "cont_noise2", "cont_noise3"]
    assert d.feature_kinds == [BINARY] * 15 + [CONTINUOUS] * 5
    assert sum(d.noise_flags) == 8
    assert d.noise_flags[10:15] == [True] * 5


def test_determinism():
    a = sample_dataset(paper_spec(300, 0.2, seed=99))
    b = sample_dataset(paper_spec(300, 0.2, seed=99))
    c = sample_dataset(paper_spec(300, 0.2, seed=100))
    assert np.array_equal(a.X, b.X) and np.array_equal(a.outcome, b.outcome)
    assert not np.array_equal(a.X, c.X)


def test_large_sample_cross_ratio():
    spec = DatasetSpec(10**6, 0.5, [("x", ContingencySpec(0.4, 0.5, 3.0))], seed=7)
    d = sample_dataset(spec)
    x, y = d.X[:, 0], d.outcome
    n11 = np.sum((x == 1) & (y == 1))
    n10 = np.sum((x == 0) & (y == 1))
    n01 = np.sum((x == 1) & (y == 0))
    n00 = np.sum((x == 0) & (y == 0))
    log_or = math.log(n00 * n11 / (n10 * n01))
    se = math.sqrt(1 / n00 + 1 / n01 + 1 / n10 + 1 / n11)
    assert abs(log_or - math.log(3.0)) < 3 * se
    n = d.n
    assert abs(x.mean() - 0.4) < 4 * math.sqrt(0.24 / n)
    assert abs(y.mean() - 0.5) < 4 * math.sqrt(0.25 / n)


def test_continuous_moments():
    spec = DatasetSpec(200000, 0.3, continuous_features=[("z", ContinuousFeatureSpec(1.5, 2.0))], seed=3)
    d = sample_dataset(spec)
    z1 = d.X[d.outcome == 1, 0]
    z0 = d.X[d.outcome == 0, 0]
    assert abs(z1.mean() - 1.5) < 0.03 and abs(z1.std() - 2.0) < 0.03
    assert abs(z0.mean()) < 0.02 and abs(z0.std() - 1.0) < 0.02


def test_exact_counts():
    spec = DatasetSpec(1000, 0.3, [("x", ContingencySpec(0.1, 0.3, 3.0))], seed=1, exact_counts=True)
    d = sample_dataset(spec)
    c = cell_probabilities(spec.binary_features[0][1])
    assert d.outcome.sum() == 300
    assert d.X[d.outcome == 1, 0].sum() == round(c.pi_11 / 0.3 * 300)


def test_csv_roundtrip(tmp_path):
    d = sample_dataset(paper_spec(40, 0.4, seed=2))
    path, side = write_dataset(d, tmp_path / "d.csv")
    assert side.exists()
    e = read_dataset(path)
    assert np.array_equal(d.X, e.X) and np.array_equal(d.outcome, e.outcome)
    assert e.names == d.names and e.noise_flags == d.noise_flags
    assert path.read_text().splitlines()[0].startswith("Y,bin_OR3_50_50")
    write_dataset(d, tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_bytes() == path.read_bytes()


def test_spec_dict_roundtrip():
    s = paper_spec(100, 0.2, seed=5)
    assert DatasetSpec.from_dict(s.to_dict()) == s
