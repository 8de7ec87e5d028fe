"""
End-to-end tests of the command-line commands on tiny domains
"""

import csv
import json

import pytest

from .cli import main
from .config import load_config
from .geometry import load_domain, sample_uniform
from .learner import evaluate_policy, load_model
from .toolpath import Move, Toolpath

CONFIG = """\
learner:
  batch_size: 8
  replay_size: 64
  hidden_units: 16
  target_update: 10
thermal:
  calibrate: false
  angle_sweep:
run:
  snapshot_every: 1
"""


@pytest.fixture
def files(tmp_path):
    domain = tmp_path / "square.json"
    domain.write_text(json.dumps({"units": "mm", "vertices": [[0, 0], [0.25, 0], [0.25, 0.25], [0, 0.25]]}))
    config = tmp_path / "run.yaml"
    config.write_text(CONFIG)
    return {"domain": str(domain), "config": str(config), "tmp": tmp_path}


def _run(files, command, out, *extra):
    argv = [command, "--config", files["config"], "--out", str(out), "-q"]
    if command not in ("export-gcode", "angle-study"):
        argv += ["--domain", files["domain"]]
    return main(argv + list(extra))


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def _train(files, name, seed="3"):
    out = files["tmp"] / name
    assert _run(files, "train", out, "--episodes", "2", "--seed", seed) == 0
    return out


def test_sample(files):
    """Grid CSV and manifest inventory"""
    out = files["tmp"] / "sample"
    assert _run(files, "sample", out) == 0
    rows = _rows(out / "grid.csv")
    assert rows[0] == ["index", "i", "j", "x_mm", "y_mm"]
    assert len(rows) == 37
    listed = [o["path"] for o in _manifest(out)["outputs"]]
    assert listed == ["grid.csv", "grid.svg"]


def test_hatch_flag_overrides_config(files):
    """--hatch-um takes precedence over the file and the default"""
    out = files["tmp"] / "coarse"
    assert _run(files, "sample", out, "--hatch-um", "125") == 0
    assert len(_rows(out / "grid.csv")) == 1 + 9
    assert _manifest(out)["config"]["geometry"]["hatch_mm"] == 0.125


def test_train_outputs_and_determinism(files):
    """Training writes model, log, curves and snapshots; repeats are byte-identical"""
    first = _train(files, "train_a")
    second = _train(files, "train_b")

    assert (first / "model.json").read_bytes() == (second / "model.json").read_bytes()
    assert (first / "toolpath.json").read_bytes() == (second / "toolpath.json").read_bytes()
    assert len(_rows(first / "training_log.csv")) == 3
    assert sorted(p.name for p in (first / "snapshots").iterdir()) == ["episode_0001.svg", "episode_0002.svg"]
    assert (first / "training_curves.svg").exists()

    manifest = _manifest(first)
    assert manifest["command"] == "train"
    assert manifest["seeds"] == {"learner": 3}
    assert manifest["config"]["learner"]["episodes"] == 2
    listed = {o["path"] for o in manifest["outputs"]}
    assert {"model.json", "training_log.csv", "toolpath.json", "snapshots/episode_0002.svg"} <= listed


def test_generate_direct_matches_rollout(files):
    """Direct mode reproduces the greedy rollout of the model"""
    model = _train(files, "model") / "model.json"
    out = files["tmp"] / "gen"
    assert _run(files, "generate", out, "--model", str(model)) == 0

    cfg = load_config(files["config"])
    domain, _ = load_domain(files["domain"])
    grid = sample_uniform(domain, cfg.geometry.hatch_mm)
    expected, _ = evaluate_policy(load_model(model), grid, cfg.env, cfg.thermal.velocity_mm_s)
    assert Toolpath.load(out / "toolpath.json").indices == expected.indices

    again = files["tmp"] / "gen_again"
    assert _run(files, "generate", again, "--model", str(model)) == 0
    assert (out / "toolpath.json").read_bytes() == (again / "toolpath.json").read_bytes()


def test_generate_island_mode(files):
    """Island mode writes the plan next to the toolpath"""
    model = _train(files, "model") / "model.json"
    domain = files["tmp"] / "strip.json"
    domain.write_text(json.dumps({"vertices": [[0, 0], [0.5, 0], [0.5, 0.25], [0, 0.25]]}))
    config = files["tmp"] / "islands.yaml"
    config.write_text(CONFIG + "geometry:\n  island_size_mm: 0.25\n  voronoi_random_seeds: 2\n")

    out = files["tmp"] / "islands"
    argv = ["generate", "--config", str(config), "--domain", str(domain), "--model", str(model),
            "--mode", "voronoi-island", "--out", str(out), "-q"]
    assert main(argv) == 0
    plan = json.loads((out / "island_plan.json").read_text())
    assert sorted(plan["order"]) == [0, 1]
    path = Toolpath.load(out / "toolpath.json")
    assert sorted(path.indices) == list(range(66))


def test_baseline_and_compare(files):
    """Baseline files, and a comparison listing the same strategy twice"""
    out = files["tmp"] / "zigzag"
    assert _run(files, "baseline", out, "--strategy", "zigzag") == 0
    assert Toolpath.load(out / "toolpath.json").metadata["generator"] == "zigzag"

    out = files["tmp"] / "compare"
    assert _run(files, "compare", out, "--strategy", "zigzag,zigzag") == 0
    rows = _rows(out / "summary.csv")
    assert len(rows) == 3
    assert rows[1] == rows[2]
    assert (out / "depth_1_zigzag.csv").exists() and (out / "depth_2_zigzag.csv").exists()
    assert (out / "depth_overlay.svg").exists()
    assert _manifest(out)["calibration"]["calibrated"] is False

    field = _rows(out / "field_1_zigzag.csv")
    assert field[0] == ["x_mm", "y_mm", "temperature_k"]
    assert len(field) == 1 + 40 * 40
    temps = [float(r[2]) for r in field[1:]]
    assert min(temps) >= 300.0
    assert max(temps) > 300.0
    assert _rows(out / "field_2_zigzag.csv") == field


def test_compare_with_model(files):
    """The learned pattern is compared against a baseline"""
    model = _train(files, "model") / "model.json"
    out = files["tmp"] / "compare_drl"
    assert _run(files, "compare", out, "--strategy", "drl,atg", "--model", str(model)) == 0
    rows = _rows(out / "summary.csv")
    assert [r[0] for r in rows[1:]] == ["drl", "atg"]
    assert all(float(r[1]) >= 0 for r in rows[1:])


def test_export_gcode_drops_isolated_point(files):
    """A point far from both neighbors does not reach the G-code"""
    path = Toolpath([Move(0, 0.0, 0.0, False), Move(1, 0.05, 0.0, True), Move(2, 0.1, 0.0, True),
                     Move(3, 0.9, 0.7, False)], hatch=0.05)
    src = files["tmp"] / "path.json"
    path.save(src)

    out = files["tmp"] / "gcode"
    assert _run(files, "export-gcode", out, "--toolpath", str(src)) == 0
    lines = (out / "toolpath.gcode").read_text().splitlines()
    assert lines == ["G21", "G90", "G0 X0.0000 Y0.0000", "G1 X0.0500 Y0.0000", "G1 X0.1000 Y0.0000"]


def test_angle_study(files):
    """Eight template angles give eight rows"""
    out = files["tmp"] / "angles"
    assert _run(files, "angle-study", out) == 0
    rows = _rows(out / "angle_study.csv")
    assert rows[0] == ["angle_deg", "max_depth_um"]
    assert len(rows) == 9


def test_failures_leave_no_output(files):
    """Missing inputs and bad settings exit with 2 and write nothing"""
    out = files["tmp"] / "missing"
    assert main(["train", "--domain", str(files["tmp"] / "nope.json"), "--config", files["config"],
                 "--out", str(out), "-q"]) == 2
    assert not out.exists()

    bad = files["tmp"] / "bad.yaml"
    bad.write_text("learner:\n  episodez: 3\n")
    assert main(["sample", "--domain", files["domain"], "--config", str(bad), "--out", str(out), "-q"]) == 2
    assert not out.exists()

    assert _run(files, "baseline", out, "--strategy", "spiral") == 2
    assert _run(files, "generate", out) == 2
    assert not out.exists()
    assert not [p for p in files["tmp"].iterdir() if p.name.startswith(".lpbf-")]
