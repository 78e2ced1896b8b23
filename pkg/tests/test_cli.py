import json
from pathlib import Path

import pytest

from qcpto.cli import main
from qcpto.config import config_from_dict, config_to_dict, RunConfig
from qcpto.errors import ConfigError


def small_config_doc(**extra):
    doc = {
        "seed": 0,
        "scenario": {"n_vehicles": 10, "duration_s": 20.0},
        "solver": {"scheme": "heuristic"},
    }
    doc.update(extra)
    return doc


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def read(path: Path) -> bytes:
    return path.read_bytes()


def test_run_happy_path(tmp_path):
    cfg = write_config(tmp_path, small_config_doc())
    out = tmp_path / "results"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "run.json").exists()
    assert (out / "epochs.csv").exists()
    assert (out / "resolved_config.json").exists()
    doc = json.loads((out / "run.json").read_text())
    assert doc["scheme"] == "heuristic"
    header = (out / "epochs.csv").read_text().splitlines()[0]
    assert header == "slot,user_id,turn,worker_id,awareness,latency_s,satisfied"


def test_run_unknown_scheme_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path, small_config_doc(solver={"scheme": "bogus"}))
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "r")]) == 1
    assert "solver.scheme" in capsys.readouterr().err


def test_run_unknown_key_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path, small_config_doc(scenario={"n_vehicless": 5}))
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "r")]) == 1
    assert "n_vehicless" in capsys.readouterr().err


def test_run_seed_override_is_deterministic(tmp_path):
    cfg = write_config(tmp_path, small_config_doc())
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["run", "--config", cfg, "--seed", "42", "--out", str(out1)]) == 0
    assert main(["run", "--config", cfg, "--seed", "42", "--out", str(out2)]) == 0
    for name in ("run.json", "epochs.csv", "resolved_config.json"):
        assert read(out1 / name) == read(out2 / name)


def test_resolved_config_reruns_identically(tmp_path):
    cfg = write_config(tmp_path, small_config_doc())
    out1 = tmp_path / "r1"
    assert main(["run", "--config", cfg, "--out", str(out1)]) == 0
    out2 = tmp_path / "r2"
    assert main(["run", "--config", str(out1 / "resolved_config.json"),
                 "--out", str(out2)]) == 0
    assert read(out1 / "run.json") == read(out2 / "run.json")
    assert read(out1 / "epochs.csv") == read(out2 / "epochs.csv")


def test_oracle_happy_path(tmp_path):
    out = tmp_path / "oracle"
    assert main(["oracle", "--n", "6", "--m", "2", "--count", "5",
                 "--seed", "0", "--out", str(out)]) == 0
    lines = (out / "gap_table.csv").read_text().splitlines()
    assert len(lines) == 6
    assert all(row.split(",")[6] == "0" for row in lines[1:])  # no mismatches


def test_oracle_zero_count(tmp_path):
    out = tmp_path / "oracle0"
    assert main(["oracle", "--count", "0", "--out", str(out)]) == 0
    assert (out / "gap_table.csv").read_text().count("\n") == 1


def test_oracle_fixed_seed_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["oracle", "--n", "5", "--m", "2", "--count", "4",
                     "--seed", "9", "--out", str(out)]) == 0
    assert read(a / "gap_table.csv") == read(b / "gap_table.csv")


def test_oracle_rejects_intractable_bounds(tmp_path):
    assert main(["oracle", "--n", "20", "--m", "3", "--count", "1",
                 "--out", str(tmp_path)]) == 1


def sweep_config_doc():
    return {
        "seed": 0,
        "scenario": {"n_vehicles": 8, "duration_s": 15.0},
        "sweep": {"experiment": "CpuCapacity", "grid": [1.5, 2.5],
                  "seeds": [0, 1], "schemes": ["exact", "go"]},
    }


def test_sweep_run_and_plotdata(tmp_path):
    cfg = write_config(tmp_path, sweep_config_doc())
    out = tmp_path / "sweepres"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "sweep.json").exists()

    plots = tmp_path / "plots"
    assert main(["plotdata", "--results", str(out), "--out", str(plots)]) == 0
    csv = (plots / "cpu_capacity.csv").read_text().splitlines()
    assert csv[0] == "sweep_var,scheme,metric,mean,ci95_lo,ci95_hi"
    # 2 grid values x 2 schemes x 4 metrics
    assert len(csv) == 1 + 2 * 2 * 4

    plots2 = tmp_path / "plots2"
    assert main(["plotdata", "--results", str(out), "--out", str(plots2)]) == 0
    assert read(plots / "cpu_capacity.csv") == read(plots2 / "cpu_capacity.csv")


def test_plotdata_missing_results(tmp_path, capsys):
    empty = tmp_path / "nothing"
    empty.mkdir()
    assert main(["plotdata", "--results", str(empty), "--out",
                 str(tmp_path / "p")]) == 2
    assert "missing results" in capsys.readouterr().err


def test_config_round_trip_dict():
    cfg = RunConfig()
    doc = config_to_dict(cfg)
    assert config_from_dict(doc) == cfg


def test_config_rejects_unknown_top_level_key():
    with pytest.raises(ConfigError):
        config_from_dict({"nonsense": 1})
