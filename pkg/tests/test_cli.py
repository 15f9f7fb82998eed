import json
import subprocess
import sys

import pytest

from submcf import cli
from submcf import families as F
from submcf.errors import MeshCollapse

FAST_POLICY = {"horizon": 0.02, "sample_interval": 0.01, "safety": 1.0, "diameter_factor": 0}


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj, indent=2))
    return str(p)


def test_flow_scenario(tmp_path):
    out = tmp_path / "o"
    cfg = write(tmp_path, "c.json", {
        "scenario": "flow",
        "initial": {"family": "plane_circle", "params": {"radius": 1.0, "h": 0.2}},
        "policy": {"horizon": 1.0, "sample_interval": 0.1, "safety": 1.0},
        "expect_outcome": "SHRINKS_TO_POINT",
        "output": str(out),
    })
    assert cli.run_scenario(cfg) == 0
    fate = json.loads((out / "fate.json").read_text())
    assert fate["outcome"] == "SHRINKS_TO_POINT"
    assert (out / "trace.csv").read_text().startswith("t,max_A2")


def test_flow_scenario_wrong_expectation(tmp_path):
    cfg = write(tmp_path, "c.json", {
        "scenario": "flow",
        "initial": {"family": "equatorial_sphere", "params": {"h": 0.3}},
        "policy": FAST_POLICY,
        "expect_outcome": "SHRINKS_TO_POINT",
        "output": str(tmp_path / "o"),
    })
    assert cli.run_scenario(cfg) == 2


def test_lifted_flow_scenario(tmp_path):
    cfg = write(tmp_path, "c.json", {
        "scenario": "flow",
        "initial": {"family": "heisenberg_cylinder", "params": {"h": 0.2}},
        "policy": FAST_POLICY,
        "conditions": [{"name": "heisenberg_cylinder", "m": 3}],
        "output": str(tmp_path / "o"),
    })
    assert cli.run_scenario(cfg) == 0
    header = (tmp_path / "o" / "trace.csv").read_text().splitlines()[0]
    assert "min_margin_heisenberg_cylinder" in header


def test_commutation_scenario(tmp_path):
    cfg = write(tmp_path, "c.json", {
        "scenario": "commutation",
        "submersion": {"kind": "hopf", "c": 1.0},
        "initial": {"family": "fs_circle", "params": {"phi": 0.6, "h": 0.1}},
        "policy": FAST_POLICY,
        "refine": False,
        "output": str(tmp_path / "o"),
    })
    assert cli.run_scenario(cfg) == 0
    v = json.loads((tmp_path / "o" / "verdict.json").read_text())
    assert v["test"] == "commutation" and v["pass"]
    assert (tmp_path / "o" / "distance.csv").exists()


def test_identity_scenario(tmp_path):
    cfg = write(tmp_path, "c.json", {
        "scenario": "identity",
        "test": "lift_norm",
        "submersion": "heisenberg_proj",
        "initial": {"family": "plane_circle", "params": {"h": 0.1}},
        "output": str(tmp_path / "o"),
    })
    assert cli.run_scenario(cfg) == 0


def test_audit_scenario(tmp_path):
    cfg = write(tmp_path, "c.json", {"scenario": "audit", "n_points": 5, "output": str(tmp_path / "o")})
    assert cli.run_scenario(cfg) == 0
    assert len(list((tmp_path / "o").glob("audit_*.json"))) == 3


def test_sweep_scenario(tmp_path):
    cfg = write(tmp_path, "c.json", {
        "scenario": "sweep",
        "initial": {"family": "plane_circle", "params": {"h": 0.2}},
        "policy": FAST_POLICY,
        "sweep": {"param": "radius", "values": [1.0, 1.5]},
        "output": str(tmp_path / "o"),
    })
    assert cli.run_scenario(cfg) == 0
    rows = (tmp_path / "o" / "sweep.csv").read_text().splitlines()
    assert len(rows) == 3


def test_bad_json_reports_line(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", '{\n  "scenario": "flow",\n  "policy": {,\n}\n')
    assert cli.run_scenario(cfg) == 4
    assert f"{cfg}:3:" in capsys.readouterr().err


def test_unknown_family_reports_line(tmp_path, capsys):
    text = '{\n  "scenario": "flow",\n  "policy": {"horizon": 1, "sample_interval": 0.1},\n' \
           '  "initial": {\n    "family": "nope"\n  }\n}\n'
    cfg = write(tmp_path, "c.json", text)
    assert cli.run_scenario(cfg) == 4
    assert f"{cfg}:5:" in capsys.readouterr().err


@pytest.mark.parametrize("obj", [{"scenario": "dance"}, {"policy": {}}, [1, 2]])
def test_bad_configs(tmp_path, obj):
    assert cli.run_scenario(write(tmp_path, "c.json", obj)) == 4


def test_bad_policy(tmp_path):
    cfg = write(tmp_path, "c.json", {
        "scenario": "flow",
        "initial": {"family": "plane_circle"},
        "policy": {"horizon": -1, "sample_interval": 0.1},
    })
    assert cli.run_scenario(cfg) == 4


def test_missing_file():
    assert cli.run_scenario("/nonexistent/config.json") == 4


def test_numerical_error_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise MeshCollapse("edge shrank to zero")

    monkeypatch.setattr(cli, "run_flow", boom)
    cfg = write(tmp_path, "c.json", {
        "scenario": "flow",
        "initial": {"family": "plane_circle", "params": {"h": 0.2}},
        "policy": FAST_POLICY,
        "output": str(tmp_path / "o"),
    })
    assert cli.run_scenario(cfg) == 3


def test_main_list(capsys):
    assert cli.main(["list"]) == 0
    out = capsys.readouterr().out
    for name in F.CATALOG:
        assert name in out
    assert cli.main(["list", "--json"]) == 0
    assert set(json.loads(capsys.readouterr().out)) == set(F.CATALOG)


def test_main_audit_inline(capsys):
    assert cli.main(["audit", '{"kind": "sasaki_proj", "r": 1.0, "c": 1.0}']) == 0
    assert json.loads(capsys.readouterr().out)["pass"] is True
    assert cli.main(["audit", "{bad"]) == 4


def test_main_run_jobs(tmp_path):
    cfgs = [
        write(tmp_path, f"c{i}.json", {"scenario": "audit", "n_points": 3, "output": str(tmp_path / f"o{i}")})
        for i in range(2)
    ]
    assert cli.main(["run", *cfgs, "--jobs", "2"]) == 0


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "submcf.cli", "list"], capture_output=True, text=True)
    assert r.returncode == 0 and "plane_circle" in r.stdout
