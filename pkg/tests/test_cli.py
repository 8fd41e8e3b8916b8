import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from rydberg_tj.cli import main
from rydberg_tj.runner import ConfigError, load_config, validate_config

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def small_config(tmp_path, **over):
    common = tmp_path / "common.json"
    common.write_text(json.dumps({
        "couplings": {"units": "MHz", "t_up": 1.1, "t_dn": 1.2, "J_perp": 0.107, "J_z": -0.071,
                      "a_ref": 14.7, "sign_mode": "frustrated"},
    }))
    doc = {
        "include": ["common.json"],
        "geometry": {"kind": "ladder", "n_sites": 7, "a": 14.7, "h": 12.730648},
        "sector": {"holes": [3], "magnons": [4]},
        "spectrum": {"k": 4, "manifold": 4},
        "light_shift": {"units": "MHz", "delta0": 25.0, "delta_knee": 5.0, "t_knee": 1.0, "tau": 1.0},
        "schedule": {"t_end": 1.0, "snapshots": [0, 0.5, 1.0], "max_step": 0.02},
        "measurement": {"bases": ["up", "hole", "down"], "shots": 300, "channel": False},
        "seeds": {"measure": 5},
    }
    doc.update(over)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(doc))
    return path


def manifest(out):
    return json.loads((Path(out) / "manifest.json").read_text())


def test_toycheck_without_config(tmp_path, capsys):
    assert main(["toycheck", "--out", str(tmp_path / "o")]) == 0
    text = capsys.readouterr().out
    assert "toycheck: complete" in text and "singlet" in text
    assert manifest(tmp_path / "o")["steps"]["toycheck"]["summary"]["ok"] is True


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "rydberg_tj", "toycheck", "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr


def test_other_steps_need_config(tmp_path, capsys):
    assert main(["ground", "--out", str(tmp_path)]) == 2
    assert "--config" in capsys.readouterr().err


def test_full_pipeline(tmp_path, capsys):
    cfg = small_config(tmp_path)
    out = tmp_path / "out"
    assert main(["all", "--config", str(cfg), "--out", str(out)]) == 0
    m = manifest(out)
    for step in ("ground", "ramp", "measure", "reconstruct"):
        assert m["steps"][step]["status"] == "complete"
        for rel, sha in m["steps"][step]["files"].items():
            assert (out / rel).is_file()
    assert str(tmp_path / "common.json") in m["inputs"]
    assert {"numpy", "scipy", "rydberg_tj", "python"} <= set(m["versions"])
    assert (out / "measure" / "shots" / "hole.txt").is_file()
    rows = np.loadtxt(out / "reconstruct" / "pair_combos.tsv", skiprows=1)
    assert rows.shape == (21, 5)
    assert np.abs(rows[:, 2:]).max() <= 4.0


def test_measure_requires_ramp(tmp_path, capsys):
    cfg = small_config(tmp_path)
    assert main(["measure", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "ramp" in capsys.readouterr().err


def test_steps_run_separately(tmp_path):
    cfg = small_config(tmp_path)
    out = str(tmp_path / "o")
    assert main(["ramp", "--config", str(cfg), "--out", out]) == 0
    assert main(["measure", "--config", str(cfg), "--out", out]) == 0
    assert set(manifest(out)["steps"]) == {"ramp", "measure"}


def test_overwrite_refused_then_forced(tmp_path, capsys):
    out = str(tmp_path / "o")
    a = small_config(tmp_path)
    assert main(["ground", "--config", str(a), "--out", out]) == 0
    b = small_config(tmp_path, seeds={"measure": 6})
    assert main(["ground", "--config", str(b), "--out", out]) == 2
    assert "--force" in capsys.readouterr().err
    assert main(["ground", "--config", str(b), "--out", out, "--force"]) == 0


def test_bit_identical_reruns(tmp_path):
    cfg = small_config(tmp_path)
    outs = [tmp_path / "r1", tmp_path / "r2"]
    for o in outs:
        assert main(["all", "--config", str(cfg), "--out", str(o)]) == 0
    for rel in ("ramp/snapshots.tsv", "measure/shots/up.txt", "reconstruct/pair_combos.tsv",
                "ground/spectrum.tsv"):
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes()
    assert manifest(outs[0])["steps"] == manifest(outs[1])["steps"]


def test_seed_override(tmp_path):
    cfg = small_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["ramp", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["measure", "--config", str(cfg), "--out", str(a)]) == 0
    for s in ("ramp", "measure"):
        assert main([s, "--config", str(cfg), "--out", str(b), "--seed-override", "99"]) == 0
    assert manifest(b)["config"]["seeds"]["measure"] == 99
    assert (a / "measure/shots/up.txt").read_bytes() != (b / "measure/shots/up.txt").read_bytes()


def test_threads_do_not_change_results(tmp_path):
    cfg = small_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["all", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["all", "--config", str(cfg), "--out", str(b), "--threads", "3"]) == 0
    assert (a / "measure/shots/down.txt").read_bytes() == (b / "measure/shots/down.txt").read_bytes()


# ---------------------------------------------------------------- configuration handling

def test_include_merge(tmp_path):
    raw, files = load_config(small_config(tmp_path))
    assert raw["couplings"]["t_up"] == 1.1 and "include" not in raw
    assert len(files) == 2


def test_include_cycle(tmp_path):
    (tmp_path / "a.json").write_text(json.dumps({"include": ["b.json"]}))
    (tmp_path / "b.json").write_text(json.dumps({"include": ["a.json"]}))
    with pytest.raises(ConfigError):
        load_config(tmp_path / "a.json")


@pytest.mark.parametrize("patch,field", [
    ({"sector": {"holes": [99], "magnons": [4]}}, "sector.holes"),
    ({"sector": {"holes": [3], "magnons": [3]}}, "sector"),
    ({"measurement": {"bases": ["sideways"]}}, "measurement.bases"),
    ({"measurement": {"shots": 0}}, "measurement.shots"),
    ({"seeds": {"measure": "x"}}, "seeds.measure"),
    ({"geometry": {}}, "geometry"),
])
def test_validation_names_the_field(tmp_path, capsys, patch, field):
    cfg = small_config(tmp_path, **patch)
    assert main(["ground", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert field in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["ground", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2


def test_measure_without_seed_is_refused(tmp_path, capsys):
    cfg = small_config(tmp_path, seeds={})
    assert main(["all", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "seeds.measure" in capsys.readouterr().err


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_shipped_configs_validate(name):
    raw, _ = load_config(CONFIGS / name)
    cfg = validate_config(raw, base_dir=CONFIGS)
    assert cfg.geometry.n_sites > 0
    assert len(cfg.hash) == 64


def test_fit_init_on_shipped_shots(tmp_path):
    doc = {
        "include": [str(CONFIGS / "initmodel_shipped_shots.json")],
        "initmodel": {"shots_dir": str(CONFIGS / "data" / "initmodel_shots"),
                      "fit": {"restarts": 1, "max_iter": 60}},
    }
    path = tmp_path / "fit.json"
    path.write_text(json.dumps(doc))
    out = tmp_path / "o"
    assert main(["fit-init", "--config", str(path), "--out", str(out)]) in (0, 1)
    m = manifest(out)["steps"]["fit-init"]
    assert m["status"] == "complete"
    assert (out / "fit-init" / "model.json").is_file()
    trace = np.loadtxt(out / "fit-init" / "trace.tsv", skiprows=1)
    assert trace[-1, 1] < trace[0, 1]
    assert m["summary"]["max_one_error_vs_data"] < 0.05
