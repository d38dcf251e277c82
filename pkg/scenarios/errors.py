#!/usr/bin/env python3
"""Scenario ingestion errors."""

from typing import Optional

from planning.errors import NavigationError


class ScenarioError(NavigationError):
    """Base class for scenario file problems."""


class ScenarioParseError(ScenarioError):
    """The file is not valid YAML or does not match the scenario schema."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        location = f"line {line}: " if line is not None else ""
        super().__init__(f"{location}{message}")
        self.line = line
        self.field = field


class ScenarioValidationError(ScenarioError):
    """The scenario parses but violates a named invariant."""

    def __init__(self, invariant: str, message: str):
        super().__init__(f"[{invariant}] {message}")
        self.invariant = invariant
