import csv
import json
import subprocess
import sys

import pytest

from singmfg.cadlag import path_to_json, ramp, step
from singmfg.cli import COMMANDS, main

FAMILY = {"u_values": [-1, -0.5, 0, 0.5, 1], "jump_times": [0, 0.5], "heights": [0.5, 1]}
SOLVER = {"n_paths": 200, "grid_steps": 40, "n_certificate": 40, "certificate_N": 32}
NO_INTERACTION = {
    "name": "no-interaction",
    "b": {"template": "linear", "cu": 1.0},
    "sigma": 0.2,
    "f": [{"template": "quadratic-clamped", "cu": 1.0, "c0": -0.3}, {"template": "quadratic-clamped", "cx": 1.0, "c0": -0.5}],
    "h": 0.1,
}


def _write(path, obj):
    path.write_text(json.dumps(obj), encoding="utf-8")
    return path


def _run(tmp_path, cfg, name="cfg.json", extra=()):
    p = _write(tmp_path / name, cfg)
    return main(["--config", str(p), *extra])


@pytest.fixture
def paths_dir(tmp_path):
    _write(tmp_path / "a.json", path_to_json(step(0.5)))
    _write(tmp_path / "b.json", path_to_json(step(0.5)))
    _write(tmp_path / "fam.json", {"step": path_to_json(step(0.5)), "ramp, wide": path_to_json(ramp(0.5, 0.75))})
    _write(tmp_path / "mu.json", {"atoms": [0.0, 2.0]})
    _write(tmp_path / "nu.json", {"atoms": [1.0, 3.0]})
    return tmp_path


def test_m1_identical_prints_zero(paths_dir, capsys):
    code = _run(paths_dir, {"command": "m1-dist", "inputs": {"paths": ["a.json", "b.json"]}, "output_dir": "out"})
    assert code == 0
    assert capsys.readouterr().out.strip() == "0.0"
    rows = list(csv.reader(open(paths_dir / "out" / "distances.csv", encoding="utf-8")))
    assert rows[0] == ["id", "a", "b"]


def test_csv_quoting_of_ids(paths_dir):
    assert _run(paths_dir, {"command": "m1-dist", "inputs": {"paths": ["fam.json"]}, "output_dir": "out"}) == 0
    text = (paths_dir / "out" / "distances.csv").read_text(encoding="utf-8")
    assert '"ramp, wide"' in text
    rows = list(csv.reader(text.splitlines()))
    assert rows[0] == ["id", "step", "ramp, wide"]


def test_wasserstein_command(paths_dir, capsys):
    assert _run(paths_dir, {"command": "wasserstein", "inputs": {"mu": "mu.json", "nu": "nu.json"}, "output_dir": "w"}) == 0
    assert capsys.readouterr().out.strip() == "1.0"
    rows = list(csv.reader(open(paths_dir / "w" / "wasserstein.csv", encoding="utf-8")))
    assert rows[0] == ["id1", "id2", "p", "value", "ground", "grid"]


def test_solve_mfg_no_interaction(tmp_path):
    cfg = {"command": "solve-mfg", "params": {"model": NO_INTERACTION, "m": 1.0, "family": FAMILY, "solver": SOLVER}, "output_dir": "o"}
    assert _run(tmp_path, cfg) == 0
    trace = list(csv.DictReader(open(tmp_path / "o" / "trace.csv", encoding="utf-8")))
    assert 1 <= len(trace) <= 2
    sol = json.loads((tmp_path / "o" / "solution.json").read_text())
    assert sol["status"] == "converged"


def test_unconverged_exit_code(tmp_path):
    model = {"b": {"template": "linear", "cu": 1.0}, "sigma": 0.1, "f": {"template": "quadratic-clamped", "cu": 1.0, "cm": 1.0}}
    solver = dict(SOLVER, max_iter=2, tol=1e-12, damping=0.1)
    cfg = {"command": "solve-mfg", "params": {"model": model, "family": {"u_values": [-1, 1]}, "solver": solver}, "output_dir": "o"}
    assert _run(tmp_path, cfg) == 3
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["status"] == "unconverged"
    assert {o["file"] for o in manifest["outputs"]} == {"trace.csv", "solution.json"}


def test_approx_precondition_exit_2(tmp_path, capsys):
    cfg = {"command": "approx-study", "params": {"model": {"sigma": 0.1}, "n_list": [2, 8], "epsilon": 0.25, "family": {"u_values": [0]}}}
    assert _run(tmp_path, cfg) == 2
    assert "precondition" in capsys.readouterr().err


@pytest.mark.parametrize(
    "cfg",
    [
        {"command": "m1-dist", "inputs": {"paths": ["a.json"]}, "bogus": 1},
        {"command": "m1-dist", "inputs": {"paths": ["a.json"]}, "params": {"N": 128, "extra": 2}},
        {"command": "m1-dist", "inputs": {"paths": ["a.json"]}, "params": {"N": 4}},
        {"command": "teleport"},
        {"command": "solve-mfg", "params": {"model": {"sigma": 1, "zeta": 2}, "family": {"u_values": [0]}}},
        {"command": "solve-mfg", "params": {"model": {"sigma": 1}, "family": {"u_values": [0], "colour": "red"}}},
    ],
)
def test_schema_violations_exit_2(paths_dir, cfg):
    assert _run(paths_dir, cfg) == 2


def test_missing_files_exit_2(tmp_path):
    assert main(["--config", str(tmp_path / "nope.json")]) == 2
    assert _run(tmp_path, {"command": "m1-dist", "inputs": {"paths": ["missing.json"]}}) == 2
    (tmp_path / "bad.json").write_text("{not json", encoding="utf-8")
    assert main(["--config", str(tmp_path / "bad.json")]) == 2


def test_manifest_lists_every_output(paths_dir):
    cfg = {"command": "oscillation", "inputs": {"paths": ["fam.json"]}, "params": {"deltas": [0.1, 0.01], "t": 0.5}, "seed": 4}
    assert _run(paths_dir, cfg, extra=["--out", str(paths_dir / "osc")]) == 0
    manifest = json.loads((paths_dir / "osc" / "manifest.json").read_text())
    on_disk = {p.name for p in (paths_dir / "osc").iterdir()} - {"manifest.json"}
    assert on_disk == {o["file"] for o in manifest["outputs"]}
    assert manifest["seed"] == 4 and manifest["config"] == cfg
    assert {"python", "numpy", "scipy"} <= set(manifest["versions"])
    assert "wall_time_s" in manifest


def test_seed_flag_overrides(tmp_path):
    cfg = {"command": "simulate", "seed": 1, "params": {"model": {"sigma": 1.0}, "n_paths": 20, "grid_steps": 10}}
    _run(tmp_path, cfg, extra=["--out", str(tmp_path / "s1")])
    _run(tmp_path, cfg, extra=["--out", str(tmp_path / "s2"), "--seed", "2"])
    a = (tmp_path / "s1" / "ensemble.csv").read_bytes()
    b = (tmp_path / "s2" / "ensemble.csv").read_bytes()
    assert a != b
    assert json.loads((tmp_path / "s2" / "manifest.json").read_text())["seed"] == 2


def test_every_command_has_a_schema():
    from singmfg.cli import HANDLERS, SCHEMAS

    assert set(COMMANDS) == set(SCHEMAS) == set(HANDLERS)


def test_module_entry_point(paths_dir):
    cfg = _write(paths_dir / "c.json", {"command": "m1-dist", "inputs": {"paths": ["a.json", "b.json"]}, "output_dir": "o"})
    res = subprocess.run([sys.executable, "-m", "singmfg", "--config", str(cfg)], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "0.0"
