import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from hybridbft import cli, suites
from hybridbft.sim.config import load_config

ROOT = Path(__file__).resolve().parents[1]

SMALL = {
    "system": {"n": 4, "view_change_timeout_s": 2.0, "epoch_length": 4},
    "network": {"delta_ms": 400.0},
    "workload": {"total_txs": 120, "rate_tps": 300.0, "accounts": 60},
    "run": {"seed": 3, "horizon_s": 30.0},
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return path


def test_run_writes_outputs(config, tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(config), "--out", str(out)]) == cli.EXIT_OK
    names = {p.name for p in out.iterdir()}
    assert {"throughput.csv", "latency.csv", "summary.csv", "confirmations.csv",
            "verdicts.json", "config.json"} <= names
    verdicts = json.loads((out / "verdicts.json").read_text())
    assert all(item["pass"] for item in verdicts.values())
    assert "confirmed=120/120" in capsys.readouterr().out


def test_rerun_is_byte_identical(config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert cli.main(["run", "--config", str(config), "--out", str(out), "--set", "run.trace=true"]) == 0
    for p in sorted(a.iterdir()):
        assert p.read_bytes() == (b / p.name).read_bytes(), p.name


def test_seed_and_mode_flags(config, tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(config), "--out", str(out), "--seed", "11",
                     "--mode", "global_all"]) == 0
    written = json.loads((out / "config.json").read_text())
    assert written["run"]["seed"] == 11 and written["system"]["mode"] == "global_all"
    with open(out / "confirmations.csv") as fh:
        assert {row["path"] for row in csv.DictReader(fh)} == {"global"}


def test_env_mirror(config, tmp_path, monkeypatch):
    monkeypatch.setenv("HYBRIDBFT_CONFIG", str(config))
    monkeypatch.setenv("HYBRIDBFT_SEED", "5")
    out = tmp_path / "env"
    assert cli.main(["run", "--out", str(out)]) == 0
    assert json.loads((out / "config.json").read_text())["run"]["seed"] == 5


@pytest.mark.parametrize("argv", [
    ["run"],
    ["run", "--config", "/nonexistent.yaml"],
    ["bogus"],
    ["run", "--config", "CONFIG", "--set", "n=abc"],
    ["run", "--config", "CONFIG", "--set", "novalue"],
    ["sweep", "--config", "CONFIG"],
    ["check", "--seeds", "0"],
])
def test_usage_errors_exit_2(argv, config, monkeypatch, capsys):
    monkeypatch.delenv("HYBRIDBFT_CONFIG", raising=False)
    argv = [str(config) if a == "CONFIG" else a for a in argv]
    assert cli.main(argv) == cli.EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_violation_exits_1(config, tmp_path, monkeypatch):
    real = suites.evaluate

    def broken(result):
        v = real(result)
        v["safety"] = {"pass": False, "counterexamples": ["injected"]}
        return v
    monkeypatch.setattr(suites, "evaluate", broken)
    assert cli.main(["run", "--config", str(config), "--out", str(tmp_path / "x")]) == cli.EXIT_VIOLATION


def test_sweep_rows(config, tmp_path):
    out = tmp_path / "sw"
    rc = cli.main(["sweep", "--config", str(config), "--vary", "payment_proportion=0,1",
                   "--seeds", "2", "--out", str(out)])
    assert rc == 0
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [(r["payment_proportion"], r["seed"]) for r in rows] == [("0", "3"), ("0", "4"), ("1", "3"), ("1", "4")]
    assert all(r["pass"] == "pass" for r in rows)
    assert {"mean_latency_ms", "throughput_tps", "payment_latency_ms", "contract_latency_ms"} <= set(rows[0])


def test_sweep_jobs_cross_product(config):
    jobs = cli.sweep_jobs(load_config(config), ["n=4,7", "straggler_factor=1,2"], 3)
    assert len(jobs) == 12
    assert {j[0].system.n for j in jobs} == {4, 7}
    assert {tuple(sorted(j[0].network.stragglers.items())) for j in jobs} == {(), ((0, 2.0),)}


def test_check_suite(capsys):
    assert cli.main(["check", "--suite", "ordering", "--seeds", "2"]) == 0
    assert "all properties hold" in capsys.readouterr().out


def test_console_entry_point_exit_code(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hybridbft.cli", "run"], capture_output=True, text=True,
                          cwd=tmp_path, env={"PATH": "/usr/bin:/bin"})
    assert proc.returncode == 2 and "usage" in proc.stderr


def test_shipped_configs_validate():
    for path in sorted((ROOT / "configs").glob("*.yaml")):
        load_config(path).validate()
