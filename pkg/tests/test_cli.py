import json

import pytest

from rwre_lab.cli import main


def _cfg(tmp_path, **vals):
    vals.setdefault("output_dir", str(tmp_path / "out"))
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(vals))
    return str(p)


def _digests(outdir):
    m = json.loads((outdir / "manifest.json").read_text())
    return {f["file"]: f["sha256"] for f in m["files"]}


def test_simulate_writes_manifest(tmp_path):
    cfg = _cfg(tmp_path, n=32, N=5)
    assert main(["simulate", "--config", cfg]) == 0
    out = tmp_path / "out"
    man = json.loads((out / "manifest.json").read_text())
    assert {f["file"] for f in man["files"]} >= {"summary.json"}
    assert man["config"]["n"] == 32 and "runtime_seconds" in man
    assert json.loads((out / "summary.json").read_text())["passed"] is True


def test_density_passes(tmp_path):
    assert main(["density", "--config", _cfg(tmp_path, ladder=[0, 1, 2], M=200)]) == 0


def test_statistical_failure_exit_1(tmp_path):
    cfg = _cfg(tmp_path, n=64, N=200, thresholds={"clt": {"cov_rel_max": 0}})
    assert main(["clt", "--config", cfg]) == 1
    assert (tmp_path / "out" / "summary.json").exists()


@pytest.mark.parametrize("vals", [
    {"law": {"nu": 1, "kind": "mixture", "components": [[0.75, [0.5, 0.5]], [0.75, [0.2, 0.8]]]}},
    {"law": {"nu": 1, "kind": "deterministic", "vector": [1.0, 0.0]}},
    {"law": {"nu": 1, "kind": "nope"}},
    {"n": -3},
    {"t_grid": [0.5, 2.0]},
    {"master_seed": "x"},
])
def test_config_errors_exit_2_without_outputs(tmp_path, vals):
    assert main(["simulate", "--config", _cfg(tmp_path, **vals)]) == 2
    assert not (tmp_path / "out").exists()


def test_unknown_experiment_and_missing_file(tmp_path):
    assert main(["bogus", "--config", _cfg(tmp_path)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["simulate", "--config", _cfg(tmp_path), "--n"]) == 2


def test_resource_error_exit_3_without_outputs(tmp_path):
    cfg = _cfg(tmp_path, ladder=[0, 50], M=2, cap=100)
    assert main(["density", "--config", cfg]) == 3
    assert not (tmp_path / "out").exists()
    assert not list(tmp_path.glob(".rwre-stage-*"))


def test_overrides_take_precedence(tmp_path):
    cfg = _cfg(tmp_path, n=32, N=5)
    assert main(["simulate", "--config", cfg, "--n", "16"]) == 0
    man = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert man["config"]["n"] == 16


def test_digests_independent_of_workers(tmp_path):
    base = {"n": 64, "M": 40, "N_pairs": 500}
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(["collisions", "--config", _cfg(tmp_path, output_dir=str(a), workers=1, **base)]) in (0, 1)
    assert main(["collisions", "--config", _cfg(tmp_path, output_dir=str(b), workers=4, **base)]) in (0, 1)
    assert _digests(a) == _digests(b)
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()


def test_describe_warns_on_large_tables(tmp_path, capsys):
    law = {"nu": 3, "kind": "dirichlet", "alphas": [1] * 6}
    assert main(["describe", "collisions", "--config", _cfg(tmp_path, law=law, n=4096)]) == 0
    text = capsys.readouterr().out
    assert "collision chain box" in text and "WARNING: ResourceError likely" in text
    assert not (tmp_path / "out").exists()


def test_describe_lists_plan(tmp_path, capsys):
    assert main(["describe", "scaling", "--config", _cfg(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert "[scaling]" in text and "thresholds" in text and "WARNING" not in text
