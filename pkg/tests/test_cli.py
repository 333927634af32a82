import json
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import pytest

from asyncmpc.cli import main
from asyncmpc.harness import dump_config, load_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def tiny_config(tmp_path):
    cfg = load_config(CONFIGS / "unicycle.yaml")
    cfg = replace(
        cfg,
        output_dir=str(tmp_path / "run"),
        model=replace(cfg.model, hidden=(8,)),
        pretrain=replace(cfg.pretrain, episodes=2, steps=5, iterations=3, batch_size=32, val_episodes=1),
        meta=replace(cfg.meta, n_envs=2, n_iterations=1, m_test=1, train_freq=2),
        episode=replace(cfg.episode, max_actions=5),
        suites=replace(cfg.suites, exploration_runs=1, exploration_budget=4),
    )
    return dump_config(cfg, tmp_path / "tiny.yaml")


def test_check_passes(capsys):
    assert main(["check"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) >= 9 and all(line.startswith("PASS ") for line in lines)


@pytest.mark.parametrize("argv", [["frobnicate"], ["check", "--nope"], [], ["ablate", "everything", "x.yaml"]])
def test_usage_errors_exit_1(argv, capsys):
    assert main(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_malformed_config_reports_key_path(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("schema_version: 1\nplanner:\n  horizn: 4\n")
    assert main(["run-episode", str(bad)]) == 1
    assert "planner.horizn" in capsys.readouterr().err


def test_missing_config_is_a_config_error(tmp_path):
    assert main(["train-meta", str(tmp_path / "nowhere.yaml")]) == 1


def test_run_episode_then_metrics_is_deterministic(tiny_config, tmp_path, capsys):
    assert main(["run-episode", str(tiny_config), "--seed", "3"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["applied_actions"] <= 5 and summary["physics_steps"] >= summary["applied_actions"]
    log = tmp_path / "run" / "events.jsonl"
    assert main(["metrics", str(log)]) == 0
    first = capsys.readouterr().out
    assert main(["metrics", str(log), "--out", str(tmp_path / "m.json")]) == 0
    assert (tmp_path / "m.json").read_text() == first
    m = json.loads(first)
    assert m["applied_actions"] == summary["applied_actions"]
    # the same seed replays the same log
    log_bytes = log.read_bytes()
    assert main(["run-episode", str(tiny_config), "--seed", "3"]) == 0
    assert log.read_bytes() == log_bytes


def test_metrics_on_missing_log_fails(tmp_path):
    assert main(["metrics", str(tmp_path / "none.jsonl")]) == 1


def test_train_meta_writes_metrics(tiny_config, tmp_path):
    out = tmp_path / "meta"
    assert main(["train-meta", str(tiny_config), "--out-dir", str(out)]) == 0
    assert len((out / "metrics.jsonl").read_text().splitlines()) == 1
    assert (out / "prior_best.npz").exists() and (out / "config.yaml").exists()


def test_ablate_exploration(tiny_config, tmp_path, capsys):
    assert main(["ablate", "exploration", str(tiny_config), "--out-dir", str(tmp_path / "abl")]) == 0
    assert json.loads(capsys.readouterr().out)["ok"] is True
    assert (tmp_path / "abl" / "exploration" / "exploration.csv").exists()


def test_bad_parallel_flag(tiny_config):
    assert main(["run-episode", str(tiny_config), "--parallel", "0"]) == 1


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "asyncmpc.cli", "check"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
