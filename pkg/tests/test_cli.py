import json
from pathlib import Path

import pandas as pd
import pytest
from click.testing import CliRunner

from scenarios.loader import load_scenario
from src.main import EXIT_ANOMALIES, EXIT_INPUT_ERROR, EXIT_SUCCESS, cli, main

CORPUS = Path(__file__).resolve().parent.parent / "scenarios" / "corpus"
HEAD_ON = str(CORPUS / "head_on_open.yaml")
SINGLE = str(CORPUS / "single_agent.yaml")


@pytest.fixture
def runner(monkeypatch):
    monkeypatch.delenv("NAV_RESERVATION_BACKEND", raising=False)
    return CliRunner()


def test_validate_ok(runner):
    result = runner.invoke(cli, ["validate", HEAD_ON])
    assert result.exit_code == EXIT_SUCCESS
    assert "ok (2 agents, 0 corridors)" in result.output


def test_validate_reports_invariant(runner, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(CORPUS.joinpath("head_on_open.yaml").read_text().replace("x: 17.5, y: 4.5, theta: W",
                                                                            "x: 2.5, y: 4.5, theta: W"))
    result = runner.invoke(cli, ["validate", str(bad)])
    assert result.exit_code == EXIT_INPUT_ERROR
    assert "start-separation" in result.output


def test_missing_file(runner, tmp_path):
    assert runner.invoke(cli, ["validate", str(tmp_path / "none.yaml")]).exit_code == EXIT_INPUT_ERROR


def test_run_writes_outputs(runner, tmp_path, mocker):
    close = mocker.patch("src.main.close_redis_client")
    out = tmp_path / "run"
    result = runner.invoke(cli, ["run", SINGLE, "--out", str(out), "--render"])
    assert result.exit_code == EXIT_SUCCESS
    assert "SR=1.000" in result.output
    for name in ("trajectory.csv", "metrics.json", "reservations.csv", "alert_history.json", "episode.svg"):
        assert (out / name).exists()
    assert json.loads((out / "metrics.json").read_text())["mode"] == "full"
    assert json.loads((out / "alert_history.json").read_text())["alert_count"] == 0
    close.assert_called_once_with()


def test_run_closes_client_on_bad_input(runner, tmp_path, mocker):
    close = mocker.patch("src.main.close_redis_client")
    result = runner.invoke(cli, ["run", str(tmp_path / "none.yaml"), "--out", str(tmp_path / "x")])
    assert result.exit_code == EXIT_INPUT_ERROR
    close.assert_called_once_with()


def test_run_with_anomalies_exits_one(runner, tmp_path):
    out = tmp_path / "baseline"
    result = runner.invoke(cli, ["run", HEAD_ON, "--out", str(out), "--mode", "baseline"])
    assert result.exit_code == EXIT_ANOMALIES
    assert "collided=2" in result.output
    assert "critical_alerts=1" in result.output
    alerts = (out / "alerts.jsonl").read_text().splitlines()
    assert json.loads(alerts[0])["rule_name"] == "agent_collision"
    history = json.loads((out / "alert_history.json").read_text())
    assert history["summary"]["by_rule"] == {"agent_collision": 1}


def test_render_recorded_trajectory(runner, tmp_path):
    out = tmp_path / "run"
    runner.invoke(cli, ["run", SINGLE, "--out", str(out)])
    svg = tmp_path / "cells.svg"
    result = runner.invoke(cli, ["render", str(out / "trajectory.csv"), SINGLE, "--out", str(svg),
                                 "--cells-at", "0"])
    assert result.exit_code == EXIT_SUCCESS
    assert svg.read_text().count('class="voronoi-cell"') == 1


def test_gen_primitives(runner, tmp_path):
    result = runner.invoke(cli, ["gen-primitives"])
    assert result.exit_code == EXIT_SUCCESS
    assert result.output.startswith("# heading_count=8")
    out = tmp_path / "p16.txt"
    assert runner.invoke(cli, ["gen-primitives", "--headings", "16", "--out", str(out)]).exit_code == 0
    assert out.read_text().startswith("# heading_count=16")
    assert runner.invoke(cli, ["gen-primitives", "--turn-radius", "0.5"]).exit_code == EXIT_INPUT_ERROR


def test_generate(runner, tmp_path):
    out = tmp_path / "env1.yaml"
    result = runner.invoke(cli, ["generate", "env1", "--agents", "4", "--out", str(out)])
    assert result.exit_code == EXIT_SUCCESS
    assert len(load_scenario(out).agents) == 4
    assert runner.invoke(cli, ["generate", "env1", "--agents", "3", "--out", str(out)]).exit_code == 2


def test_bench_table(runner, tmp_path):
    out = tmp_path / "bench.csv"
    result = runner.invoke(cli, ["bench", "--variants", "env1", "--agents", "2", "--spacings", "4",
                                 "--modes", "full", "--out", str(out)])
    assert result.exit_code in (EXIT_SUCCESS, EXIT_ANOMALIES)
    table = pd.read_csv(out)
    assert list(table["mode"]) == ["full"]
    assert runner.invoke(cli, ["bench", "--modes", "fast", "--out", str(out)]).exit_code == EXIT_INPUT_ERROR


def test_main_returns_exit_codes(tmp_path, monkeypatch):
    monkeypatch.delenv("NAV_RESERVATION_BACKEND", raising=False)
    assert main(["validate", HEAD_ON]) == EXIT_SUCCESS
    assert main(["validate", str(tmp_path / "none.yaml")]) == EXIT_INPUT_ERROR
    assert main(["run"]) == EXIT_INPUT_ERROR
