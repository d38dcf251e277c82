#!/usr/bin/env python3
"""
Anomaly alerts for simulation episodes.

The orchestrator reports collisions, deadlocks, reservation denials,
stalled agents and corridor conflicts as ``SimulationEvent``s; rules turn
them into alerts with a severity and a per-agent cooldown measured in
simulation steps.
"""

import json
import logging
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from monitoring.config import get_monitoring_config

logger = logging.getLogger(__name__)

SEVERITIES = ("INFO", "WARNING", "CRITICAL")


@dataclass(frozen=True)
class SimulationEvent:
    kind: str
    step: int
    time: float
    agent_ids: Tuple[int, ...] = ()
    detail: Dict = field(default_factory=dict)


@dataclass
class AlertRule:
    name: str
    event_kind: str
    severity: str   # INFO, WARNING, CRITICAL
    message_template: str
    cooldown_steps: int = 0
    enabled: bool = True


@dataclass
class Alert:
    id: str
    rule_name: str
    severity: str
    message: str
    step: int
    time: float
    agent_ids: Tuple[int, ...] = ()

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["agent_ids"] = list(self.agent_ids)
        return data


class AlertSystem:
    """Rule evaluation, cooldowns and handler dispatch."""

    def __init__(self, history_limit: Optional[int] = None):
        self.alert_rules: List[AlertRule] = []
        self.alert_history: List[Alert] = []
        self.history_limit = history_limit or get_monitoring_config().alert_history_limit
        self.last_alert_step: Dict[str, int] = {}
        self.notification_handlers: List[Callable[[Alert], None]] = []
        self.counts = defaultdict(int)

        self.setup_default_rules()

    def setup_default_rules(self):
        self.alert_rules = [
            AlertRule(
                name="agent_collision",
                event_kind="collision",
                severity="CRITICAL",
                message_template="agents {agents} collided at t={time:.2f}s",
            ),
            AlertRule(
                name="agent_deadlock",
                event_kind="deadlock",
                severity="WARNING",
                message_template="agent {agents} made no progress for {window} steps",
            ),
            AlertRule(
                name="reservation_denied",
                event_kind="reservation_denied",
                severity="INFO",
                message_template="agent {agents} denied corridor {corridor_id} ({direction})",
                cooldown_steps=50,
            ),
            AlertRule(
                name="agent_stalled",
                event_kind="hold_outside_cell",
                severity="WARNING",
                message_template="agent {agents} held by its cell for {holds} steps",
                cooldown_steps=get_monitoring_config().stall_warning_steps,
            ),
            AlertRule(
                name="corridor_conflict",
                event_kind="corridor_conflict",
                severity="CRITICAL",
                message_template="agents {agents} inside corridor {corridor_id} in opposite directions",
            ),
        ]

    def add_rule(self, rule: AlertRule):
        if rule.severity not in SEVERITIES:
            raise ValueError(f"unknown severity '{rule.severity}'")
        self.alert_rules.append(rule)

    def process_event(self, event: SimulationEvent) -> List[Alert]:
        triggered = []
        for rule in self.alert_rules:
            if not rule.enabled or rule.event_kind != event.kind:
                continue
            alert_key = f"{rule.name}_{'-'.join(str(a) for a in event.agent_ids)}"
            last = self.last_alert_step.get(alert_key)
            if last is not None and event.step - last < rule.cooldown_steps:
                continue
            values = {"agents": ", ".join(str(a) for a in event.agent_ids), "step": event.step,
                      "time": event.time, **event.detail}
            try:
                message = rule.message_template.format(**values)
            except KeyError as e:
                logger.warning(f"Alert rule {rule.name} has no value for {e}")
                message = f"{rule.name}: {values}"
            alert = Alert(f"{alert_key}_{event.step}", rule.name, rule.severity, message, event.step,
                          event.time, tuple(event.agent_ids))
            self.last_alert_step[alert_key] = event.step
            self.counts[rule.severity] += 1
            triggered.append(alert)

        for alert in triggered:
            self.alert_history.append(alert)
            for handler in self.notification_handlers:
                try:
                    handler(alert)
                except Exception as e:
                    logger.error(f"Alert handler failed for {alert.id}: {e}")
        if len(self.alert_history) > self.history_limit:
            self.alert_history = self.alert_history[-self.history_limit:]
        return triggered

    def get_alerts(self, severity: Optional[str] = None) -> List[Alert]:
        if severity:
            return [a for a in self.alert_history if a.severity == severity]
        return list(self.alert_history)

    def get_alert_summary(self) -> Dict:
        by_rule: Dict[str, int] = defaultdict(int)
        for alert in self.alert_history:
            by_rule[alert.rule_name] += 1
        return {
            'total': len(self.alert_history),
            'by_severity': {severity: self.counts[severity] for severity in SEVERITIES},
            'by_rule': dict(sorted(by_rule.items())),
            'recent_alerts': [a.to_dict() for a in self.alert_history[-10:]],
        }

    def add_notification_handler(self, handler: Callable[[Alert], None]):
        self.notification_handlers.append(handler)

    def save_alert_history(self, filename: str) -> Path:
        data = {
            'alert_count': len(self.alert_history),
            'summary': self.get_alert_summary(),
            'alerts': [alert.to_dict() for alert in self.alert_history],
        }
        path = Path(filename)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as f:
            json.dump(data, f, indent=2, sort_keys=True)
        return path


def logging_handler(alert: Alert):
    level = {'INFO': logging.INFO, 'WARNING': logging.WARNING, 'CRITICAL': logging.ERROR}[alert.severity]
    logger.log(level, f"[ALERT] [{alert.severity}] step {alert.step}: {alert.message}")


def jsonl_file_handler(filename: str) -> Callable[[Alert], None]:
    """Handler appending one JSON line per alert to ``filename``."""
    path = Path(filename)
    path.parent.mkdir(parents=True, exist_ok=True)

    def handler(alert: Alert):
        with open(path, 'a') as f:
            f.write(json.dumps(alert.to_dict(), sort_keys=True) + "\n")

    return handler
