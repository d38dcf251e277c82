#!/usr/bin/env python3
"""
Runtime configuration read from the environment.

Scenario parameters (weights, radii, budgets) live in the scenario file;
this module only covers how the process runs: logging, output location,
reservation backend and alert thresholds.
"""

import os
from dataclasses import dataclass

RESERVATION_BACKENDS = ("memory", "redis")


@dataclass
class RuntimeConfig:
    log_level: str = os.getenv('NAV_LOG_LEVEL', "INFO")
    output_dir: str = os.getenv('NAV_OUTPUT_DIR', "runs")
    reservation_backend: str = os.getenv('NAV_RESERVATION_BACKEND', "memory")
    episode_namespace: str = os.getenv('NAV_EPISODE', "default")


@dataclass
class MonitoringConfig:
    alert_history_limit: int = 1000
    stall_warning_steps: int = 25   # consecutive holds before a stall alert
    progress_every_steps: int = 50


runtime_config = RuntimeConfig()
monitoring_config = MonitoringConfig()


def get_runtime_config() -> RuntimeConfig:
    """
    Get current runtime configuration.

    Returns:
        RuntimeConfig: Current runtime configuration instance
    """
    return runtime_config


def get_monitoring_config() -> MonitoringConfig:
    return monitoring_config


def update_config_from_env() -> None:
    """
    Update configuration from environment variables.

    Raises:
        ValueError: NAV_RESERVATION_BACKEND names an unknown backend
    """
    global runtime_config, monitoring_config

    if os.getenv('NAV_LOG_LEVEL'):
        runtime_config.log_level = os.getenv('NAV_LOG_LEVEL').upper()
    if os.getenv('NAV_OUTPUT_DIR'):
        runtime_config.output_dir = os.getenv('NAV_OUTPUT_DIR')
    if os.getenv('NAV_RESERVATION_BACKEND'):
        backend = os.getenv('NAV_RESERVATION_BACKEND').lower()
        if backend not in RESERVATION_BACKENDS:
            raise ValueError(f"NAV_RESERVATION_BACKEND must be one of {RESERVATION_BACKENDS}")
        runtime_config.reservation_backend = backend
    if os.getenv('NAV_EPISODE'):
        runtime_config.episode_namespace = os.getenv('NAV_EPISODE')

    if os.getenv('NAV_ALERT_HISTORY_LIMIT'):
        monitoring_config.alert_history_limit = int(os.getenv('NAV_ALERT_HISTORY_LIMIT'))
    if os.getenv('NAV_STALL_WARNING_STEPS'):
        monitoring_config.stall_warning_steps = int(os.getenv('NAV_STALL_WARNING_STEPS'))


update_config_from_env()
