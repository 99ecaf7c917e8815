import csv
import json

import numpy as np
import pytest
import yaml

from featbias.cli import main
from featbias.datagen import paper_spec


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_gen_paper_grid(tmp_path):
    assert main(["gen", "--paper-grid", "--out-dir", str(tmp_path), "--seed", "4"]) == 0
    csvs = sorted(tmp_path.glob("*.csv"))
    sides = sorted(tmp_path.glob("*.json"))
    assert len(csvs) == 15
    assert len([s for s in sides if s.name != "manifest.json"]) == 15
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["command"] == "gen" and man["root_seed"] == 4 and len(man["outputs"]) == 30


def test_gen_spec_deterministic(tmp_path):
    spec = tmp_path / "spec.yaml"
    spec.write_text(yaml.safe_dump(paper_spec(100, 0.3, seed=1).to_dict()))
    for d in ("a", "b"):
        assert main(["gen", "--spec", str(spec), "--out", str(tmp_path / d / "x.csv"), "--seed", "7"]) == 0
    assert (tmp_path / "a" / "x.csv").read_bytes() == (tmp_path / "b" / "x.csv").read_bytes()
    assert (tmp_path / "a" / "x.json").read_bytes() == (tmp_path / "b" / "x.json").read_bytes()


def test_gen_rejects_infeasible_and_invalid(tmp_path):
    bad = paper_spec(100, 0.5, seed=1).to_dict()
    bad["binary_features"][0]["odds_ratio"] = -2.0
    spec = tmp_path / "bad.yaml"
    spec.write_text(yaml.safe_dump(bad))
    assert main(["gen", "--spec", str(spec), "--out", str(tmp_path / "x.csv")]) == 2
    spec.write_text("n: [1, 2]\n")
    assert main(["gen", "--spec", str(spec), "--out", str(tmp_path / "x.csv")]) == 2
    assert not (tmp_path / "x.csv").exists()


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as e:
        main(["gen", "--no-such-flag"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["fit", "--method", "svm", "--data", "x", "--out-dir", "y"])
    assert e.value.code == 2


def _table3d_csv(path):
    # counts 36, 14, 24, 26 from the OR 2.79 panel at N = 100
    x = np.repeat([0, 0, 1, 1], [36, 14, 24, 26])
    y = np.repeat([0, 1, 0, 1], [36, 14, 24, 26])
    with open(path, "w") as fh:
        fh.write("Y,x\n" + "".join(f"{a},{b}\n" for a, b in zip(y, x)))
    return path


@pytest.mark.parametrize("method", ["ml", "logf", "firth"])
def test_fit_contains_built_in_or(tmp_path, method):
    data = _table3d_csv(tmp_path / "t.csv")
    out = tmp_path / method
    assert main(["fit", "--method", method, "--data", str(data), "--out-dir", str(out)]) == 0
    row = read_csv(out / "fit_table.csv")[0]
    assert float(row["ci_lo"]) < 2.79 < float(row["ci_hi"])
    info = json.loads((out / "fit_info.json").read_text())
    assert info["n"] == 100 and (out / "manifest.json").exists()


def test_fit_missing_file_exits_2(tmp_path):
    assert main(["fit", "--data", str(tmp_path / "nope.csv"), "--out-dir", str(tmp_path / "o")]) == 2


def test_forest_cif_gini_is_usage_error(tmp_path):
    data = _table3d_csv(tmp_path / "t.csv")
    with pytest.raises(SystemExit) as e:
        main(["forest", "--algo", "cif", "--importance", "gini", "--data", str(data), "--out-dir", str(tmp_path)])
    assert e.value.code == 2


def test_forest_command(tmp_path):
    data = tmp_path / "d.csv"
    main(["gen", "--spec", str(_spec_file(tmp_path)), "--out", str(data)])
    out = tmp_path / "f"
    assert main(["forest", "--data", str(data), "--out-dir", str(out), "--ntree", "20", "--reps", "2",
                 "--importance", "gini", "perm-auc"]) == 0
    rows = read_csv(out / "rank_table.csv")
    assert len(rows) == 2 * 20
    assert {r["pair"] for r in rows} == {"cart+gini", "cart+perm_auc"}


def _spec_file(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(paper_spec(100, 0.5, seed=3).to_dict()))
    return spec


def _bench_yaml(tmp_path):
    cfg = {"sizes": [100], "outcome_fractions": [0.5], "forest_repeats": 2, "n_trees": 20, "bootstrap_reps": 2,
           "regression_methods": ["ml", "lasso"], "lambda_path_len": 8, "cv_folds": 3,
           "enet_alpha_grid": [0.0, 1.0], "bootstrap_cells": [[100, 0.5]]}
    path = tmp_path / "bench.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_bench_print_config(tmp_path, capsys):
    assert main(["bench", "--config", str(_bench_yaml(tmp_path)), "--seed", "9", "--print-config"]) == 0
    cfg = yaml.safe_load(capsys.readouterr().out)
    assert cfg["root_seed"] == 9 and cfg["n_trees"] == 20


def test_bench_bad_config_exits_2(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("forest_split: 2.0\n")
    assert main(["bench", "--config", str(path), "--out-dir", str(tmp_path / "o")]) == 2
    path.write_text("mystery_key: 1\n")
    assert main(["bench", "--config", str(path), "--out-dir", str(tmp_path / "o")]) == 2


def test_bench_threads_identical(tmp_path):
    cfg = _bench_yaml(tmp_path)
    for t in ("1", "8"):
        assert main(["bench", "--config", str(cfg), "--out-dir", str(tmp_path / t), "--threads", t]) == 0
    for name in ("rank_table", "ci_table", "bootstrap_table", "model_quality"):
        assert (tmp_path / "1" / f"{name}.csv").read_bytes() == (tmp_path / "8" / f"{name}.csv").read_bytes()
    man = json.loads((tmp_path / "1" / "manifest.json").read_text())
    assert sorted(man["outputs"]) == ["bootstrap_table.csv", "ci_table.csv", "config.yaml", "model_quality.csv",
                                      "rank_table.csv"]
    assert len(man["config_hash"]) == 64
    rows = read_csv(tmp_path / "1" / "ci_table.csv")
    assert len(rows) == 20 and set(rows[0]) >= {"p_holm", "significant_holm", "separation"}


def test_audit_command(tmp_path):
    from featbias.audit import standin_path

    out = tmp_path / "audit"
    assert main(["audit", "--data", str(standin_path()), "--out-dir", str(out), "--ntree", "50"]) == 0
    for name in ("or_table.csv", "importance_table.csv", "quality.csv", "residuals.csv", "summary.txt",
                 "manifest.json"):
        assert (out / name).exists(), name
    feats = {r["feature"] for r in read_csv(out / "or_table.csv")}
    assert "BinaryNoise4" in feats and "GREQ" in feats
