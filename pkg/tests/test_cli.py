import json
import os

import numpy as np
import pytest

from anisokernel.cli import main

BASE_CONFIG = {
    "kernel": {"n": 1, "s": 0.25, "a": {"kind": "constant", "data": 1.0}},
    "domain": {"kind": "interval", "bounds": [-1.0, 1.0]},
    "mesh": {"target_h": 0.125, "refinements": 0},
    "load": {"kind": "constant", "value": 1.0},
    "nonlinearity": {"kind": "model", "r": 1.5, "q": 3.0,
                     "beta1_fraction": 0.9, "b_share": 0.5},
    "solver": {"tol": 1e-8, "iter_cap": 20000, "path_nodes": 21},
    "probe": {"seed": 7, "samples": 32, "radius": 0.05},
}


def write_config(tmp_path, overrides=None, **kw):
    cfg = json.loads(json.dumps(BASE_CONFIG))
    for key, val in (overrides or {}).items():
        if isinstance(val, dict) and key in cfg:
            cfg[key].update(val)
        else:
            cfg[key] = val
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_assemble_writes_matrices(tmp_path):
    cfg = write_config(tmp_path)
    out = str(tmp_path / "out")
    assert main(["assemble", "--config", cfg, "--out", out]) == 0
    gram_lines = open(os.path.join(out, "gram.txt")).read().splitlines()
    assert gram_lines[0].startswith("# config=")
    i, j, v = gram_lines[1].split()
    assert (i, j) == ("0", "0") and float(v) > 0.0
    assert os.path.exists(os.path.join(out, "mass.txt"))
    assert os.path.exists(os.path.join(out, "load.csv"))


def test_eigs_outputs(tmp_path):
    cfg = write_config(tmp_path, {"eigs": {"count": 4}})
    out = str(tmp_path / "out")
    assert main(["eigs", "--config", cfg, "--out", out]) == 0
    lines = open(os.path.join(out, "eigenvalues.csv")).read().splitlines()
    values = [float(line.split(",")[1]) for line in lines[2:]]
    assert values == sorted(values)
    report = json.load(open(os.path.join(out, "spectral_report.json")))
    assert all(v["passed"] for v in report["verdicts"])


def test_solve_linear_and_report(tmp_path):
    cfg = write_config(tmp_path)
    out = str(tmp_path / "out")
    assert main(["solve-linear", "--config", cfg, "--out", out]) == 0
    report = json.load(open(os.path.join(out, "solution_report.json")))
    assert report["hopf_quotient_min"] > 0.0
    assert report["norm_linf"] > 0.0


def test_solve_multi_writes_three_fields(tmp_path):
    cfg = write_config(tmp_path)
    out = str(tmp_path / "out")
    assert main(["solve-multi", "--config", cfg, "--out", out]) == 0
    for name in ("u_plus.csv", "u_minus.csv", "u_saddle.csv"):
        assert os.path.exists(os.path.join(out, name))
    report = json.load(open(os.path.join(out, "solve_report.json")))
    tags = [s["tag"] for s in report["solutions"]]
    assert tags == ["minimizer-positive", "minimizer-negative",
                    "mountain-pass"]
    assert all(v["passed"] for v in report["verdicts"])


def test_operator_eval_prints_rows(tmp_path, capsys):
    cfg = write_config(tmp_path, {
        "operator_eval": {"function": {"kind": "gaussian"},
                          "points": [[0.0], [0.3]]}})
    out = str(tmp_path / "out")
    assert main(["operator-eval", "--config", cfg, "--out", out]) == 0
    printed = capsys.readouterr().out.strip().splitlines()
    assert len(printed) == 2
    assert os.path.exists(os.path.join(out, "operator_eval.csv"))


def test_torsion_benchmark(tmp_path):
    cfg = write_config(tmp_path, {"mesh": {"target_h": 1.0 / 16.0},
                                  "torsion": {"refinements": 3}})
    out = str(tmp_path / "out")
    assert main(["torsion", "--config", cfg, "--out", out]) == 0
    report = json.load(open(os.path.join(out, "torsion.json")))
    assert report["monotone"]
    assert report["ratios_below_0.8"]
    assert report["constancy_defect"] < 1e-6


def test_verify_passes_on_default_config(tmp_path):
    cfg = write_config(tmp_path, {"mesh": {"target_h": 1.0 / 16.0}})
    out = str(tmp_path / "out")
    assert main(["verify", "--config", cfg, "--out", out]) == 0
    report = json.load(open(os.path.join(out, "verify.json")))
    assert all(v["passed"] for v in report["verdicts"])


def test_config_rejects_subcritical_violation(tmp_path, capsys):
    cfg = write_config(tmp_path, {"nonlinearity": {"kind": "model",
                                                   "q": 4.0}})
    code = main(["verify", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 2
    assert "2n/(n-2s)" in capsys.readouterr().err


def test_config_rejects_bad_order(tmp_path, capsys):
    cfg = write_config(tmp_path, {"kernel": {"n": 1, "s": 0.8,
                                             "a": {"kind": "constant",
                                                   "data": 1.0}}})
    code = main(["assemble", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 2
    assert "n > 2s" in capsys.readouterr().err


def test_malformed_json_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{ not json")
    assert main(["assemble", "--config", str(path)]) == 2


def test_repeat_runs_byte_identical(tmp_path):
    cfg = write_config(tmp_path)
    out1 = str(tmp_path / "a")
    out2 = str(tmp_path / "b")
    assert main(["eigs", "--config", cfg, "--out", out1]) == 0
    assert main(["eigs", "--config", cfg, "--out", out2]) == 0
    for name in ("eigenvalues.csv", "eigenvectors.csv"):
        a = open(os.path.join(out1, name), "rb").read()
        b = open(os.path.join(out2, name), "rb").read()
        assert a == b


def test_refine_flag_changes_mesh(tmp_path):
    cfg = write_config(tmp_path)
    out = str(tmp_path / "out")
    assert main(["eigs", "--config", cfg, "--out", out, "--refine", "1"]) == 0
    lines = open(os.path.join(out, "eigenvectors.csv")).read().splitlines()
    # 16 elements refined once: 33 nodes plus hash and header lines
    assert len(lines) == 35


def test_shipped_default_config_verify(tmp_path):
    import pathlib
    cfg = pathlib.Path(__file__).resolve().parents[1] / "configs" \
        / "default.json"
    out = str(tmp_path / "out")
    assert main(["verify", "--config", str(cfg), "--out", out]) == 0


def test_polygon_config_assemble(tmp_path):
    cfg = write_config(tmp_path, {
        "kernel": {"n": 2, "s": 0.4, "a": {"kind": "constant", "data": 1.0}},
        "domain": {"kind": "polygon",
                   "vertices": [[0, 0], [1, 0], [1, 1], [0, 1]]},
        "mesh": {"target_h": 0.5, "refinements": 0},
    })
    out = str(tmp_path / "out")
    assert main(["assemble", "--config", cfg, "--out", out]) == 0
    assert os.path.exists(os.path.join(out, "gram.txt"))
