import json

import numpy as np
import pytest

from glocal.cli import main
from glocal.io import load_tensor, read_pgm, read_ppm, write_pgm, write_ppm
from glocal.pipeline import STAGES


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"height": 16, "width": 12}))
    return str(path)


def test_pose_transfer(tmp_path, small_config, capsys):
    out = tmp_path / "run"
    assert main(["pose-transfer", "--config", small_config, "--seed", "3", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["seed"] == 3 and report["shape"] == [3, 16, 12]
    assert report["transport"]["converged"]
    assert read_ppm(out / "I_g.ppm").shape == (3, 16, 12)
    assert load_tensor(out / "I_g.glt").shape == (3, 16, 12)
    labels, maxval = read_pgm(out / "S_g.pgm")
    assert maxval == 7 and labels.shape == (16, 12)
    assert json.loads(capsys.readouterr().out)["seed"] == 3


def test_pose_transfer_deterministic(tmp_path, small_config):
    for name in ("a", "b"):
        main(["pose-transfer", "--config", small_config, "--out", str(tmp_path / name)])
    assert (tmp_path / "a" / "I_g.glt").read_bytes() == (tmp_path / "b" / "I_g.glt").read_bytes()


def test_inpaint_with_labels(tmp_path, small_config):
    rng = np.random.default_rng(0)
    image = rng.uniform(0, 1, (3, 16, 12))
    labels = np.zeros((16, 12), dtype=int)
    labels[4:12, 3:9] = 3
    labels[12:, 3:9] = 4
    write_ppm(tmp_path / "in.ppm", image)
    write_pgm(tmp_path / "seg.pgm", labels, 7)
    out = tmp_path / "out.ppm"
    args = ["inpaint", "--image", str(tmp_path / "in.ppm"), "--seg", str(tmp_path / "seg.pgm")]
    assert main(args + ["--mask-labels", "4", "--config", small_config, "--out", str(out)]) == 0
    result = read_ppm(out)
    original = read_ppm(tmp_path / "in.ppm")
    keep = labels != 4
    np.testing.assert_array_equal(result[:, keep], original[:, keep])


def test_inpaint_with_mask_file(tmp_path, small_config):
    image = np.full((3, 16, 12), 0.5)
    write_ppm(tmp_path / "in.ppm", image)
    write_pgm(tmp_path / "seg.pgm", np.ones((16, 12), dtype=int), 7)
    write_pgm(tmp_path / "mask.pgm", np.zeros((16, 12), dtype=int), 1)
    out = tmp_path / "out.ppm"
    code = main([
        "inpaint", "--image", str(tmp_path / "in.ppm"), "--seg", str(tmp_path / "seg.pgm"),
        "--mask", str(tmp_path / "mask.pgm"), "--config", small_config, "--out", str(out),
    ])
    assert code == 0
    assert out.read_bytes() == (tmp_path / "in.ppm").read_bytes()


def test_selftest_default(tmp_path, capsys):
    report_path = tmp_path / "r.json"
    assert main(["selftest", "--report", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    assert report["ok"] and report["summary"]["fail"] == 0
    assert report["schema"] == "glocal.selftest/1"
    modules = {c["module"] for c in report["checks"]}
    assert modules == {"tensor-core", "region-style", "graph-reasoning", "local-structure", "transport", "objectives", "pipeline"}


def test_selftest_schema_stable(tmp_path):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        main(["selftest", "--report", str(p)])
    assert paths[0].read_text() == paths[1].read_text()


def test_selftest_forced_warning(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"ot.tol": 1e-12, "ot.max_iters": 1}))
    report_path = tmp_path / "r.json"
    assert main(["selftest", "--config", str(cfg), "--report", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    marg = next(c for c in report["checks"] if c["name"] == "sinkhorn.marginals")
    assert marg["status"] == "warn"
    cfg.write_text(json.dumps({"ot.tol": 1e-12, "ot.max_iters": 1, "selftest.warnings_fail": True}))
    assert main(["selftest", "--config", str(cfg)]) == 1


@pytest.mark.parametrize("stage", ["TP", "field_hat", "ST_oc", "graph", "I_g"])
def test_dump_single_stage(tmp_path, small_config, stage):
    assert main(["dump-intermediates", "--stage", stage, "--config", small_config, "--out", str(tmp_path)]) == 0
    files = sorted(p.name for p in tmp_path.glob("*.glt"))
    assert files and all(f.startswith(stage) for f in files)


def test_dump_all(tmp_path, small_config):
    assert main(["dump-intermediates", "--stage", "all", "--config", small_config, "--out", str(tmp_path)]) == 0
    stems = {p.name.split(".")[0] for p in tmp_path.glob("*.glt")}
    assert stems == set(STAGES)
    for p in tmp_path.glob("*.glt"):
        assert np.all(np.isfinite(load_tensor(p)))


def test_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "cfg.json"
    bad.write_text(json.dumps({"nope": 1}))
    assert main(["selftest", "--config", str(bad)]) == 2
    assert "unknown config key" in capsys.readouterr().err
    assert main(["dump-intermediates", "--stage", "nope", "--out", str(tmp_path)]) == 2
    assert main(["pose-transfer", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
