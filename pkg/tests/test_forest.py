import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from featbias.datagen import paper_spec, sample_dataset
from featbias.forest import (ForestConfig, UnsupportedCombinationError, fit_forest, importance, rank_and_detect,
                             rank_values)


def separable(n=200, seed=0):
    rng = np.random.default_rng(seed)
    y = (np.arange(n) % 2).astype(np.int8)
    X = np.column_stack([y.astype(float), rng.standard_normal((n, 2)), rng.random(n) < 0.5]).astype(float)
    return X, y


def noise_data(n, seed):
    rng = np.random.default_rng(seed)
    X = np.column_stack([rng.standard_normal((n, 3)), rng.random((n, 3)) < [0.5, 0.3, 0.1]]).astype(float)
    return X, (rng.random(n) < 0.5).astype(np.int8)


@pytest.mark.parametrize("algo", ["cart", "cif"])
def test_perfect_predictor(algo):
    X, y = separable()
    model = fit_forest((X, y), ForestConfig(n_trees=60, algo=algo, seed=1))
    assert np.array_equal(model.predict(X), y)
    measures = ["perm_accuracy", "perm_auc"] + (["gini"] if algo == "cart" else [])
    for m in measures:
        rep = importance(model, (X, y), m)
        assert rep.ranks[0] == 1, m


def _hand_gini(w, y, x):
    # weighted-impurity decrease of the split x <= 0.5, over the root weight
    def ng(mask):
        tot = w[mask].sum()
        if tot == 0:
            return 0.0
        p1 = w[mask & (y == 1)].sum() / tot
        return tot * (1 - p1 ** 2 - (1 - p1) ** 2)
    allr = np.ones(len(y), dtype=bool)
    return (ng(allr) - ng(x <= 0.5) - ng(x > 0.5)) / w.sum()


def test_stump_gini_oracle():
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    y = np.array([0, 1, 1, 1], dtype=np.int8)
    seen_uniform = False
    for seed in range(60):
        model = fit_forest((X, y), ForestConfig(n_trees=1, mtry=1, seed=seed))
        w = model.nodes["inbag"][0].astype(float)
        gini = importance(model, (X, y), "gini").values[0]
        assert gini == pytest.approx(_hand_gini(w, y, X[:, 0]), abs=1e-12)
        if np.array_equal(w, [1, 1, 1, 1]):
            seen_uniform = True
            # parent 4 - 10/4 = 1.5, left {0, 1} = 1, right {1, 1} = 0, root weight 4
            assert gini == pytest.approx(0.125, abs=1e-12)
    assert seen_uniform


def test_gini_on_cif_is_rejected():
    X, y = separable()
    model = fit_forest((X, y), ForestConfig(n_trees=5, algo="cif"))
    with pytest.raises(UnsupportedCombinationError):
        importance(model, (X, y), "gini")


def test_single_class_and_config_errors():
    with pytest.raises(ValueError):
        fit_forest((np.zeros((5, 2)), np.zeros(5)), ForestConfig(n_trees=2))
    with pytest.raises(ValueError):
        ForestConfig(n_trees=0)
    with pytest.raises(ValueError):
        ForestConfig(algo="gbm")
    with pytest.raises(ValueError):
        fit_forest(separable(), ForestConfig(n_trees=2, mtry=9))


def test_determinism_and_tree_prefix():
    data = sample_dataset(paper_spec(200, 0.5, seed=3))
    a = fit_forest(data, ForestConfig(n_trees=20, seed=7))
    b = fit_forest(data, ForestConfig(n_trees=20, seed=7))
    c = fit_forest(data, ForestConfig(n_trees=10, seed=7))
    for key in a.nodes:
        assert np.array_equal(a.nodes[key], b.nodes[key])
    k = c.nodes["offsets"][-1]
    assert np.array_equal(a.nodes["threshold"][:k], c.nodes["threshold"])
    assert np.array_equal(a.nodes["inbag"][:10], c.nodes["inbag"])
    ra = importance(a, data, "perm_auc")
    rb = importance(b, data, "perm_auc")
    assert np.array_equal(ra.values, rb.values)


def test_oob_fraction():
    data = sample_dataset(paper_spec(400, 0.5, seed=1))
    model = fit_forest(data, ForestConfig(n_trees=100, seed=2))
    frac = model.oob_fraction()
    assert 0.30 <= frac.mean() <= 0.44
    sub = fit_forest(data, ForestConfig(n_trees=10, algo="cif", seed=2))
    assert np.allclose(sub.oob_fraction(), 1 - round(0.632 * 400) / 400)


def test_cif_refuses_noise_splits():
    X, y = noise_data(1000, 5)
    model = fit_forest((X, y), ForestConfig(n_trees=500, algo="cif", seed=3))
    assert model.depths().mean() <= 3


def test_unused_feature_scores_zero():
    X, y = separable()
    X = np.column_stack([X, np.zeros(len(y))])
    model = fit_forest((X, y), ForestConfig(n_trees=30, seed=4))
    used = set(model.nodes["feature"][model.nodes["feature"] >= 0].tolist())
    assert 4 not in used
    for m in ("perm_accuracy", "perm_auc", "gini"):
        assert importance(model, (X, y), m).values[4] == 0.0


def test_rows_all_on_held_out():
    data = sample_dataset(paper_spec(300, 0.5, seed=9))
    model = fit_forest(data, ForestConfig(n_trees=30, seed=1))
    test = sample_dataset(paper_spec(100, 0.5, seed=10))
    rep = importance(model, test, "perm_accuracy", rows="all")
    assert rep.per_tree.shape == (30, 20) and np.all(np.isfinite(rep.values))
    with pytest.raises(ValueError):
        importance(model, test, "perm_accuracy")


def test_vote_ties_go_to_zero():
    X, y = separable(20)
    model = fit_forest((X, y), ForestConfig(n_trees=2, seed=0))
    model.tree_values = lambda Z: np.array([[1.0, 0.9], [0.0, 0.8]])
    assert model.predict_proba(X[:2]).tolist() == [0.5, 1.0]
    assert model.predict(X[:2]).tolist() == [0, 1]


def test_dump_records(tmp_path):
    X, y = separable(60)
    model = fit_forest((X, y), ForestConfig(n_trees=3, seed=0))
    path = tmp_path / "trees.jsonl"
    model.dump(path)
    recs = [json.loads(line) for line in path.read_text().splitlines()]
    assert [r["tree"] for r in recs] == [0, 1, 2]
    root = recs[0]
    assert root["n0"][0] + root["n1"][0] == pytest.approx(60)
    assert len(root["feature"]) == len(root["left"]) == len(root["n1"])


def test_rank_and_detect_semantics():
    class R:
        measure, names = "gini", ["A", "noise1", "B"]

        def __init__(self, v):
            self.values = np.array(v)
    rep = rank_and_detect([R([5.0, 3.0, 2.0])], [False, True, False])
    assert rep.detected.tolist() == [True, False, False]
    assert rep.ranks.tolist() == [1, 2, 3]
    none = rank_and_detect([R([5.0, 3.0, 2.0])], [True, True, True])
    assert not none.detected.any()
    assert rank_values([1.0, 1.0, np.nan, 2.0]).tolist() == [2, 3, 4, 1]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=12), st.integers(0, 3), st.randoms())
def test_rank_invariance(vals, kind, rnd):
    v = np.array(vals)
    flags = [rnd.random() < 0.4 for _ in vals]
    flags[rnd.randrange(len(vals))] = True
    transform = [np.exp, lambda t: 3 * t + 1, np.arctan, lambda t: t ** 3][kind]
    with np.errstate(over="ignore"):
        w = transform(v)
    if len(np.unique(w)) != len(np.unique(v)):
        return  # transform lost resolution in floating point
    class R:
        measure, names = "x", [str(i) for i in range(len(vals))]
        def __init__(self, x):
            self.values = x
    a, b = rank_and_detect([R(v)], flags), rank_and_detect([R(w)], flags)
    assert np.array_equal(a.ranks, b.ranks) and np.array_equal(a.detected, b.detected)
    assert sorted(a.ranks.tolist()) == list(range(1, len(vals) + 1))


@pytest.mark.slow
def test_null_permutation_importance_centered():
    # fresh data per repeat gives an honest null spread
    models = []
    for s in range(30):
        Xs, ys = noise_data(300, 100 + s)
        models.append(((Xs, ys), fit_forest((Xs, ys), ForestConfig(n_trees=100, seed=s))))
    for measure in ("perm_accuracy", "perm_auc"):
        vals = np.array([importance(m, d, measure).values for d, m in models])
        se = vals.std(axis=0, ddof=1) / np.sqrt(len(vals))
        assert np.all(np.abs(vals.mean(axis=0)) <= 3 * se + 1e-12), measure


@pytest.mark.slow
def test_accuracy_and_auc_detection_agree():
    data = sample_dataset(paper_spec(1000, 0.5, seed=21))
    acc, auc = [], []
    for s in range(5):
        model = fit_forest(data, ForestConfig(n_trees=200, seed=s))
        acc.append(importance(model, data, "perm_accuracy"))
        auc.append(importance(model, data, "perm_auc"))
    da = rank_and_detect(acc, data.noise_flags).detected
    db = rank_and_detect(auc, data.noise_flags).detected
    assert (da == db).mean() >= 0.8
