import json

import pytest

from levyscale.cli import main

CL = "gallery:cramer_lundberg_exp"


def test_compute_scale_writes_csv_and_manifest(tmp_path):
    assert main(["compute-scale", "--model", CL, "--q", "0.1", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "scale.csv").read_text().splitlines()[4] == "x,W,W1,W2,u_q"
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["q"] == 0.1 and "scale.csv" in man["artifacts"]


def test_csv_byte_identical_across_runs(tmp_path):
    for d in ("a", "b"):
        assert main(["compute-scale", "--model", CL, "--q", "0.1", "--x-max", "8",
                     "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "scale.csv").read_bytes() == (tmp_path / "b" / "scale.csv").read_bytes()


def test_missing_model_file_is_usage_error(tmp_path):
    out = tmp_path / "out"
    assert main(["compute-scale", "--model", str(tmp_path / "none.yaml"), "--q", "0.1",
                 "--out", str(out)]) == 64
    assert not out.exists()


def test_bad_arguments_exit_64(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["compute-scale", "--model", CL])
    assert info.value.code == 64
    assert main(["simulate", "--model", CL, "--q", "0.1", "--strategy", "bogus:a=1", "--x0", "1",
                 "--out", str(tmp_path)]) == 64
    assert main(["compute-scale", "--model", "gallery:nope", "--q", "0.1", "--out", str(tmp_path)]) == 64


def test_unknown_tolerance_key(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["solve-definetti", "--model", CL, "--q", "0.1", "--tol", "speed=3", "--out", str(tmp_path)])
    assert info.value.code == 64


def test_invalid_config_is_usage_error(tmp_path):
    p = tmp_path / "m.yaml"
    p.write_text("family: brownian\nparams: {sigma: -2}\n")
    assert main(["compute-scale", "--model", str(p), "--q", "0.1", "--out", str(tmp_path / "o")]) == 64


def test_numerical_failure_exit_65(tmp_path, capsys):
    out = tmp_path / "o"
    code = main(["simulate", "--model", "gallery:piecewise_power", "--q", "0.1", "--strategy", "barrier:a=0.5",
                 "--x0", "0.5", "--paths", "100", "--out", str(out)])
    assert code == 65
    assert "stage=simulate" in capsys.readouterr().err
    assert not out.exists()


def test_solve_certified_and_inconclusive(tmp_path):
    assert main(["solve-definetti", "--model", CL, "--q", "0.1", "--out", str(tmp_path / "cl")]) == 0
    verdict = json.loads((tmp_path / "cl" / "verdict.json").read_text())
    assert verdict["verdict"] == "optimal_certified"
    assert (tmp_path / "cl" / "value.csv").exists() and (tmp_path / "cl" / "residuals.csv").exists()
    (tmp_path / "hump.csv").write_text("0,0.2\n1,2.0\n2,0.5\n4,0.05\n")
    (tmp_path / "hump.yaml").write_text("family: custom_density_table\nparams: {table: hump.csv, delta: 3.0}\n")
    assert main(["solve-definetti", "--model", str(tmp_path / "hump.yaml"), "--q", "0.1",
                 "--out", str(tmp_path / "h")]) == 3
    man = json.loads((tmp_path / "h" / "manifest.json").read_text())
    assert len(man["model_sha256"]) == 64


def test_analyze_shape(tmp_path):
    assert main(["analyze-shape", "--model", CL, "--q", "0.1", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "shape_report.json").read_text())
    assert rep["a_star"]["value"] == pytest.approx(2.107035, abs=2e-6)
    assert all(r["pass"] for r in rep["reports"].values())


def test_simulate_per_path_cap(tmp_path):
    assert main(["simulate", "--model", CL, "--q", "0.1", "--strategy", "barrier:a=2.107", "--x0", "1",
                 "--paths", "10500", "--seed", "4", "--per-path", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "paths.csv").read_text().splitlines()
    assert rows[0] == "path,discounted_dividends,ruin_time" and len(rows) == 10_001
    est = json.loads((tmp_path / "estimate.json").read_text())
    assert est["n_paths"] == 10500 and est["seed"] == 4
