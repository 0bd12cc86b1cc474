import json

import numpy as np
import pytest

from grassnrsfm.cli import CLIError, build_config, main, read_config_file
from grassnrsfm.io import load_matrix, save_matrix

SCENE = ["--frames", "8", "--points", "60", "--groups", "2", "--modes", "2", "--orthogonal"]


@pytest.fixture
def scene_dir(tmp_path):
    out = tmp_path / "scene"
    assert main(["synth", "--out", str(out), "--seed", "3", *SCENE]) == 0
    return out


def test_synth_outputs(scene_dir):
    W, R, gt = (load_matrix(scene_dir / f) for f in ("W.csv", "R.csv", "S_gt.csv"))
    assert W.shape == (16, 60) and R.shape == (16, 3) and gt.shape == (24, 60)
    lines = (scene_dir / "labels.csv").read_text().splitlines()
    assert lines[0] == "point_id,label" and len(lines) == 61


@pytest.mark.parametrize("algo", ["1", "2"])
def test_solve_outputs(scene_dir, tmp_path, algo):
    out = tmp_path / "run"
    rc = main(["solve", "--w", str(scene_dir / "W.csv"), "--r", str(scene_dir / "R.csv"),
               "--gt", str(scene_dir / "S_gt.csv"), "--out", str(out), "--algo", algo,
               "--ks", "2", "--max-iters", "12", "--seed", "0", "--dump-state-every", "5"])
    assert rc == 0
    assert load_matrix(out / "S.csv").shape == (24, 60)
    metrics = json.loads((out / "metrics.json").read_text())
    assert set(metrics) == {"reproj_fro", "iters", "stop_reason", "e3d"}
    assert metrics["iters"] <= 12
    assert (out / "diagnostics.csv").read_text().startswith("iter,maxgap,beta,reproj_fro,nuclear_sharp")
    assert "wall_seconds" in json.loads((out / "timing.json").read_text())
    assert sorted(p.name for p in (out / "state").iterdir())[:2] == ["S_iter00005.bin",
                                                                     "S_iter00010.bin"]


def test_zero_iterations(scene_dir, tmp_path):
    out = tmp_path / "zero"
    rc = main(["solve", "--w", str(scene_dir / "W.csv"), "--r", str(scene_dir / "R.csv"),
               "--out", str(out), "--max-iters", "0", "--format", "binary"])
    assert rc == 0
    assert json.loads((out / "metrics.json").read_text())["iters"] == 0
    assert (out / "S.bin").exists()


def test_odd_rows_rejected(tmp_path, scene_dir, capsys):
    bad = tmp_path / "odd.csv"
    save_matrix(np.ones((5, 4)), bad)
    rc = main(["solve", "--w", str(bad), "--r", str(scene_dir / "R.csv"), "--out", str(tmp_path / "x")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "rows must be even (2F)" in err and "got 5 rows" in err


def test_mismatched_rotations(tmp_path, scene_dir):
    R = tmp_path / "R.csv"
    save_matrix(np.ones((4, 3)), R)
    assert main(["solve", "--w", str(scene_dir / "W.csv"), "--r", str(R),
                 "--out", str(tmp_path / "x")]) == 2


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# weights\nk_s = 3\nmu=0.5\n\nmax_iters=7  # short\n")
    assert read_config_file(cfg) == {"k_s": "3", "mu": "0.5", "max_iters": "7"}
    main_args = type("A", (), {"config": str(cfg), "seed": None, "ks": None, "kt": None,
                               "ps": None, "pt": None, "tau": None, "dtilde": None,
                               "max_iters": None})()
    c = build_config(1, main_args)
    assert (c.n_spatial, c.gamma, c.max_iter) == (3, 0.5, 7)
    main_args.tau = 0.9
    with pytest.raises(CLIError):
        build_config(1, main_args)
    cfg.write_text("nonsense\n")
    with pytest.raises(CLIError):
        read_config_file(cfg)


def test_threads_flag(scene_dir, tmp_path, monkeypatch):
    base = ["solve", "--w", str(scene_dir / "W.csv"), "--r", str(scene_dir / "R.csv"),
            "--max-iters", "3"]
    assert main([*base, "--out", str(tmp_path / "a"), "--threads", "1"]) == 0
    monkeypatch.setenv("GNRS_THREADS", "many")
    assert main([*base, "--out", str(tmp_path / "b")]) == 2
    assert main([*base, "--out", str(tmp_path / "c"), "--threads", "0"]) == 2


def test_sweep_to_stdout(capsys):
    rc = main(["p-sweep", "--p-list", "1,2", "--max-iters", "5", *SCENE])
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "p,e3d" and len(lines) == 3
    assert main(["ablation", "--variants", "both,bogus", "--max-iters", "2", *SCENE]) != 0
