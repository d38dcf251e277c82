import json

import pytest

from monitoring import config
from monitoring.alert_system import AlertRule, AlertSystem, SimulationEvent, jsonl_file_handler
from monitoring.metrics_collector import Metrics, MetricsCollector, StepSample, fractions, min_clearance


def metrics(**overrides):
    values = dict(agent_count=4, reached=2, collided=1, deadlocked=1, **fractions(4, 1, 1),
                  avg_path_length=3.0, per_agent_length={"0": 3.0}, steps=10)
    values.update(overrides)
    return Metrics(**values)


class TestMetrics:
    def test_fractions_sum_to_one(self):
        result = metrics()
        assert result.success_rate == pytest.approx(0.5)
        assert result.success_rate + result.deadlock_fraction + result.collision_fraction == pytest.approx(1.0)
        assert result.anomalies

    def test_identity_enforced(self):
        with pytest.raises(ValueError):
            metrics(success_rate=0.75)
        with pytest.raises(ValueError):
            metrics(success_rate=1.5, deadlock_fraction=-0.5, collision_fraction=0.0)

    def test_empty_episode_is_a_success(self):
        assert fractions(0, 0, 0)["success_rate"] == 1.0
        assert not metrics(reached=4, collided=0, deadlocked=0, **fractions(4, 0, 0)).anomalies

    def test_min_clearance(self):
        positions = {0: (0.0, 0.0), 1: (3.0, 0.0), 2: (0.0, 1.0)}
        assert min_clearance(positions, {0: 0.4, 1: 0.4, 2: 0.4}) == pytest.approx(0.2)
        assert min_clearance({0: (0.0, 0.0)}, {0: 0.4}) == float("inf")


def test_collector_frame_and_summary():
    collector = MetricsCollector()
    assert collector.summary()["steps"] == 0
    collector.record(StepSample(1, 0.5, 2, 0, 0, 0, 2, 0, 1.2))
    collector.record(StepSample(2, 1.0, 2, 0, 0, 0, 1, 1, 0.7))
    frame = collector.to_dataframe()
    assert list(frame["step"]) == [1, 2]
    summary = collector.summary()
    assert summary["steps"] == 2
    assert summary["min_separation"] == pytest.approx(0.7)
    assert summary["held_fraction"] == pytest.approx(0.25)


class TestAlertSystem:
    def test_collision_alert(self):
        alerts = AlertSystem().process_event(SimulationEvent("collision", 3, 1.5, (0, 1)))
        assert len(alerts) == 1
        assert alerts[0].severity == "CRITICAL"
        assert alerts[0].message == "agents 0, 1 collided at t=1.50s"

    def test_cooldown_is_per_agent(self):
        system = AlertSystem()
        denied = {"corridor_id": "c1", "direction": "a->b"}
        assert system.process_event(SimulationEvent("reservation_denied", 10, 1.0, (4,), denied))
        assert not system.process_event(SimulationEvent("reservation_denied", 30, 3.0, (4,), denied))
        assert system.process_event(SimulationEvent("reservation_denied", 30, 3.0, (5,), denied))
        assert system.process_event(SimulationEvent("reservation_denied", 60, 6.0, (4,), denied))
        assert system.get_alert_summary()["by_rule"] == {"reservation_denied": 3}

    def test_missing_template_value_falls_back(self):
        alerts = AlertSystem().process_event(SimulationEvent("deadlock", 5, 0.5, (2,)))
        assert alerts[0].message.startswith("agent_deadlock:")

    def test_unknown_events_are_ignored(self):
        assert AlertSystem().process_event(SimulationEvent("weather", 1, 0.1)) == []

    def test_added_rules_and_severity_filter(self):
        system = AlertSystem()
        with pytest.raises(ValueError):
            system.add_rule(AlertRule("bad", "collision", "FATAL", "x"))
        system.add_rule(AlertRule("touch", "collision", "INFO", "touch {agents}"))
        triggered = system.process_event(SimulationEvent("collision", 2, 0.2, (0, 1)))
        assert [a.rule_name for a in triggered] == ["agent_collision", "touch"]
        assert [a.message for a in system.get_alerts("INFO")] == ["touch 0, 1"]
        assert len(system.get_alerts()) == 2

    def test_history_limit(self):
        system = AlertSystem(history_limit=2)
        for step in range(3):
            system.process_event(SimulationEvent("collision", step, 0.0, (step, step + 1)))
        assert [a.step for a in system.alert_history] == [1, 2]
        assert system.get_alert_summary()["by_severity"]["CRITICAL"] == 3

    def test_handlers(self, tmp_path):
        system = AlertSystem()
        seen = []

        def broken(alert):
            raise RuntimeError("handler down")

        system.add_notification_handler(broken)
        system.add_notification_handler(seen.append)
        system.add_notification_handler(jsonl_file_handler(str(tmp_path / "alerts.jsonl")))
        system.process_event(SimulationEvent("collision", 1, 0.1, (0, 1)))
        system.process_event(SimulationEvent("collision", 2, 0.2, (2, 3)))
        assert len(seen) == 2
        lines = (tmp_path / "alerts.jsonl").read_text().splitlines()
        assert [json.loads(line)["agent_ids"] for line in lines] == [[0, 1], [2, 3]]

        saved = json.loads(system.save_alert_history(str(tmp_path / "out" / "alerts.json")).read_text())
        assert saved["alert_count"] == 2
        assert saved["summary"]["by_rule"] == {"agent_collision": 2}
        assert "acknowledged" not in saved["alerts"][0]


class TestConfig:
    @pytest.fixture(autouse=True)
    def fresh_config(self, monkeypatch):
        monkeypatch.setattr(config, "runtime_config", config.RuntimeConfig())
        monkeypatch.setattr(config, "monitoring_config", config.MonitoringConfig())

    def test_environment_overrides(self, monkeypatch):
        monkeypatch.setenv("NAV_RESERVATION_BACKEND", "Redis")
        monkeypatch.setenv("NAV_LOG_LEVEL", "debug")
        monkeypatch.setenv("NAV_STALL_WARNING_STEPS", "7")
        config.update_config_from_env()
        assert config.get_runtime_config().reservation_backend == "redis"
        assert config.get_runtime_config().log_level == "DEBUG"
        assert config.get_monitoring_config().stall_warning_steps == 7

    def test_unknown_backend_rejected(self, monkeypatch):
        monkeypatch.setenv("NAV_RESERVATION_BACKEND", "postgres")
        with pytest.raises(ValueError):
            config.update_config_from_env()
