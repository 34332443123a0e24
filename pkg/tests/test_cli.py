import json
import subprocess
import sys

import numpy as np
import pytest

from detsgrad.cli import main
from detsgrad.experiment import config_from_dict, preset_config
from detsgrad.graph import build_topology
from detsgrad.presets import preset_names, presets
from detsgrad.problems.idx import write_idx_images, write_idx_labels
from detsgrad.schedule import validate
from detsgrad.sim import SimConfig

SMALL = """
name = "q"
seeds = [3]
topology = "ring(6)"
max_iterations = 600
cadence = 20

[schedule]
a = 0.1
b = 0.2525
delta1 = 0.1
delta2 = 1.0
epsilon = 1.0

[problem]
kind = "synthetic"
name = "quartic-saddle"
dim = 4

[upsilon0]
mode = "per_parameter"
value = 0.2
"""


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "q.toml"
    p.write_text(SMALL)
    return p


def _run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_every_preset_validates_against_its_topology():
    for name, raw in presets().items():
        cfg = SimConfig.model_validate(raw)
        if cfg.algorithm != "centralized_sgd":
            assert validate(cfg.schedule.build(), build_topology(cfg.topology)).ok, name


def test_paper_preset_echoes_parameters():
    cfg = preset_config("paper-ring10-detsgrad-r").sim
    s = cfg.schedule
    assert (s.a, s.b, s.delta1, s.delta2, s.epsilon) == (0.1, 0.2525, 0.1, 1.0, 1e-5)
    assert (cfg.upsilon0.mode, cfg.upsilon0.value) == ("per_parameter", 0.2)
    assert cfg.topology == "ring(10)"


def test_run_writes_artifacts_and_reruns_identically(cfg_file, tmp_path, capsys):
    code, out, _ = _run(["run", "--config", cfg_file, "--out", tmp_path / "a", "--override", "seed=7"], capsys)
    assert code == 0
    code, _, _ = _run(["run", "--config", cfg_file, "--out", tmp_path / "b", "--override", "seed=7",
                       "--threads", "3"], capsys)
    assert code == 0
    a, b = tmp_path / "a/q/seed_7/metrics.csv", tmp_path / "b/q/seed_7/metrics.csv"
    assert a.read_bytes() == b.read_bytes()
    summary = json.loads((tmp_path / "a/q/seed_7/summary.json").read_text())
    assert summary["seed"] == 7 and "reduction_percent" in summary["broadcasts"]
    agg = json.loads((tmp_path / "a/q/aggregate.json").read_text())
    assert agg["seeds"] == [7]


def test_seeds_flag_and_aggregate(cfg_file, tmp_path, capsys):
    assert _run(["run", "--config", cfg_file, "--out", tmp_path, "--seeds", "3"], capsys)[0] == 0
    agg = json.loads((tmp_path / "q/aggregate.json").read_text())
    assert agg["seeds"] == [3, 4, 5]
    assert agg["consensus_error"]["std"] > 0


def test_malformed_schedule_exit_2(cfg_file, tmp_path, capsys):
    code, _, err = _run(["run", "--config", cfg_file, "--out", tmp_path, "--override", "schedule.delta1=0.4"], capsys)
    assert code == 2 and "3*delta1 < delta2" in err


def test_unknown_key_exit_2_with_line(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(SMALL.replace("dim = 4", "dim = 4\nwidth = 3"))
    code, _, err = _run(["run", "--config", p, "--out", tmp_path], capsys)
    assert code == 2 and "line 19" in err and "width" in err


def test_bad_value_names_field(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(SMALL.replace("max_iterations = 600", "max_iterations = -5"))
    code, _, err = _run(["run", "--config", p, "--out", tmp_path], capsys)
    assert code == 2 and "line 5" in err and "max_iterations" in err


def test_toml_syntax_error(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("a = [")
    assert _run(["run", "--config", p], capsys)[0] == 2
    assert _run(["run", "--config", tmp_path / "none.toml"], capsys)[0] == 2
    assert _run(["run"], capsys)[0] == 2


def test_missing_dataset_exit_3(tmp_path, capsys):
    code, _, err = _run(["run", "--preset", "desk-mnist-detsgrad-s", "--out", tmp_path,
                         "--override", f"problem.images=\"{tmp_path}/nope\""], capsys)
    assert code == 3 and "not found" in err


def test_verify_quartic_decay_run(tmp_path, capsys):
    cfg = SMALL.replace("max_iterations = 600", "max_iterations = 20000").replace("cadence = 20", "cadence = 200")
    p = tmp_path / "d.toml"
    p.write_text(cfg.replace('seeds = [3]', 'seeds = [0, 1]'))
    assert _run(["run", "--config", p, "--out", tmp_path], capsys)[0] == 0
    code, out, _ = _run(["verify", tmp_path / "q"], capsys)
    report = json.loads((tmp_path / "q/verification.json").read_text())
    assert report["checks"]["consensus_slope"]["pass"], report["checks"]["consensus_slope"]
    assert report["checks"]["trigger_soundness"]["pass"]
    assert "PASS  consensus_slope" in out
    assert code == (0 if report["pass"] else 1)


def test_verify_equivalence_pair(cfg_file, tmp_path, capsys):
    _run(["run", "--config", cfg_file, "--out", tmp_path / "z", "--override", "upsilon0.value=0.0"], capsys)
    _run(["run", "--config", cfg_file, "--out", tmp_path / "c", "--override", "algorithm=\"dist_sgd_continuous\""],
         capsys)
    _run(["verify", tmp_path / "z/q", "--against", tmp_path / "c/q"], capsys)
    report = json.loads((tmp_path / "z/q/verification.json").read_text())
    assert report["checks"]["upsilon0_equivalence"]["pass"]


def test_verify_corrupt_row_exit_4(cfg_file, tmp_path, capsys):
    _run(["run", "--config", cfg_file, "--out", tmp_path], capsys)
    csv_path = tmp_path / "q/seed_3/metrics.csv"
    lines = csv_path.read_text().splitlines()
    lines[5] = "garbage," + lines[5]
    csv_path.write_text("\n".join(lines) + "\n")
    code, _, err = _run(["verify", tmp_path / "q"], capsys)
    assert code == 4 and "row 6" in err


def test_verify_missing_dir_exit_4(tmp_path, capsys):
    assert _run(["verify", tmp_path / "absent"], capsys)[0] == 4


def test_compare(cfg_file, tmp_path, capsys):
    _run(["run", "--config", cfg_file, "--out", tmp_path / "d"], capsys)
    _run(["run", "--config", cfg_file, "--out", tmp_path / "c", "--override", "algorithm=\"dist_sgd_continuous\""],
         capsys)
    code, out, _ = _run(["compare", tmp_path / "d/q", tmp_path / "c/q", "--out", tmp_path / "cmp"], capsys)
    assert code == 0
    assert out.splitlines()[0].split() == ["run", "algorithm", "agent", "accuracy", "broadcasts",
                                           "iterations", "reduction_percent"]
    assert len(out.splitlines()) == 1 + 2 * 6
    csv_rows = (tmp_path / "cmp/comparison.csv").read_text().splitlines()
    assert len(csv_rows) == 13
    assert "WARNING" not in out


def test_compare_single_dir_and_topology_warning(cfg_file, tmp_path, capsys):
    _run(["run", "--config", cfg_file, "--out", tmp_path / "a"], capsys)
    assert _run(["compare", tmp_path / "a/q"], capsys)[0] == 4
    _run(["run", "--config", cfg_file, "--out", tmp_path / "b", "--override", "topology=\"path(6)\""], capsys)
    code, out, _ = _run(["compare", tmp_path / "a/q", tmp_path / "b/q"], capsys)
    assert code == 0 and "WARNING: runs use different topologies" in out


def test_compare_agent_count_mismatch(cfg_file, tmp_path, capsys):
    _run(["run", "--config", cfg_file, "--out", tmp_path / "a"], capsys)
    _run(["run", "--config", cfg_file, "--out", tmp_path / "b", "--override", "topology=\"ring(5)\""], capsys)
    assert _run(["compare", tmp_path / "a/q", tmp_path / "b/q"], capsys)[0] == 4


def test_presets_listing(capsys):
    code, out, _ = _run(["presets"], capsys)
    assert code == 0 and out.split() == preset_names()
    code, out, _ = _run(["presets", "desk-quartic-detsgrad"], capsys)
    assert json.loads(out)["max_iterations"] == 20000
    assert _run(["presets", "nope"], capsys)[0] == 2


def test_idx_inspect(tmp_path, capsys):
    write_idx_images(tmp_path / "i", np.zeros((3, 2, 2), dtype=np.uint8))
    write_idx_labels(tmp_path / "l.gz", np.zeros(3, dtype=np.uint8))
    code, out, _ = _run(["idx-inspect", tmp_path / "i", tmp_path / "l.gz"], capsys)
    h = [json.loads(x) for x in out.splitlines()]
    assert code == 0 and h[0]["magic"] == "0x00000803" and (h[0]["rows"], h[0]["cols"]) == (2, 2)
    assert h[1]["kind"] == "labels" and h[1]["count"] == 3
    (tmp_path / "t").write_bytes(b"\x00\x00")
    assert _run(["idx-inspect", tmp_path / "t"], capsys)[0] == 3


def test_override_parsing():
    cfg = config_from_dict({"preset": "desk-quartic-detsgrad"},
                           overrides=["max_iterations=50", "problem.dim=3", "seed=9", "topology=complete(4)"])
    assert cfg.sim.max_iterations == 50 and cfg.sim.problem.dim == 3
    assert cfg.seeds == [9] and cfg.sim.topology == "complete(4)"


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "detsgrad.cli", "presets"], capture_output=True, text=True)
    assert r.returncode == 0 and "desk-quartic-detsgrad" in r.stdout
