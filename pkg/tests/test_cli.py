import json
import os

import pytest

from arctic.cli import main


def _run(capsys, *argv):
    rc = main(list(argv))
    out, err = capsys.readouterr()
    return rc, out, err


def test_count(capsys):
    rc, out, _ = _run(capsys, "count", "--hexagon", "2,2,2")
    assert rc == 0 and out.strip() == "20"
    rc, out, _ = _run(capsys, "count", "--domain", "[[0,0],[1,1],[1,3],[0,2]]")
    assert rc == 0 and out.strip() == "1"


def test_exit_codes(capsys, tmp_path):
    assert _run(capsys, "count", "--hexagon", "12,12,12")[0] == 3
    assert _run(capsys, "count", "--domain", "[[0,0],[1,0],[1,1]]")[0] == 2
    assert _run(capsys, "count")[0] == 1
    assert _run(capsys, "count", "--hexagon", "1,x,1")[0] == 1
    assert _run(capsys, "frobnicate")[0] == 1
    out = tmp_path / "ls"
    assert _run(capsys, "limit-shape", "--hexagon", "1,1,1", "--mesh", "0", "--out", str(out))[0] == 1
    assert not out.exists() or not any(out.iterdir())
    assert _run(capsys, "edge-stats", "--samples", "0", "--out", str(tmp_path))[0] == 1
    assert _run(capsys, "concentration", "--hexagon", "1,1,1", "--samples", "0", "--out", str(tmp_path))[0] == 1
    assert _run(capsys, "count", "--hexagon", "1,1,1", "--threads", "0")[0] == 1


def test_sample_files_and_determinism(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        rc, out, err = _run(capsys, "sample", "--hexagon", "1,1,1", "--n", "4", "--steps", "auto",
                            "--seed", "7", "--out", str(d))
        assert rc == 0
    assert sorted(os.listdir(a)) == ["height.csv", "run.json", "tiling.svg"]
    for name in ("height.csv", "run.json", "tiling.svg"):
        assert (a / name).read_text() == (b / name).read_text()
    meta = json.loads((a / "run.json").read_text())
    assert meta["format"] == 1 and meta["seed"] == 7
    assert "coupling from the past" in err


def test_sample_fixed_steps(capsys, tmp_path):
    rc, _, _ = _run(capsys, "sample", "--hexagon", "2,2,2", "--steps", "1000", "--seed", "1",
                    "--out", str(tmp_path))
    assert rc == 0
    meta = json.loads((tmp_path / "run.json").read_text())
    assert meta["steps"] == 1000 and meta["engine"] == "flip"


def test_seed_from_environment(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("ARCTIC_SEED", "11")
    rc, out, _ = _run(capsys, "edge-stats", "--n", "12", "--samples", "4", "--out", str(tmp_path))
    assert rc == 0
    js = json.loads(out)
    assert js["seed"] == 11
    monkeypatch.delenv("ARCTIC_SEED")
    rc, out2, _ = _run(capsys, "edge-stats", "--n", "12", "--samples", "4", "--seed", "11",
                       "--out", str(tmp_path))
    assert json.loads(out2) == js
    for name in ("edge_samples.csv", "edge_hist.svg", "edge_stats.json"):
        assert (tmp_path / name).exists()


def test_limit_shape_outputs(capsys, tmp_path):
    rc, out, err = _run(capsys, "limit-shape", "--hexagon", "1,1,1", "--mesh", "0.0625",
                        "--out", str(tmp_path))
    assert rc == 0
    js = json.loads(out)
    assert js["format"] == 1 and js["hausdorff_cells"] < 2
    assert "residual" in err
    assert (tmp_path / "arctic.svg").read_text().startswith("<svg")


def test_slope_checks_alpha_one(capsys, tmp_path):
    rc, out, _ = _run(capsys, "slope-checks", "--alpha", "1.0", "--mesh", "0.0625", "--out", str(tmp_path))
    assert rc == 0
    js = json.loads(out)
    assert all(row["solved"] == 0.0 and row["predicted"] == 0.0 for row in js["endpoint"])
    assert all(row["relative_residual"] == 0.0 for row in js["log_perturbation"])


def test_mix_check(capsys, tmp_path):
    rc, out, _ = _run(capsys, "mix-check", "--hexagon", "1,1,1", "--samples", "2000",
                      "--dynamics", "flip", "--out", str(tmp_path))
    assert rc == 0
    rep = json.loads(out)["runs"][0]
    assert rep["dynamics"] == "flip" and rep["tv"] < 0.05
