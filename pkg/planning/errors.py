#!/usr/bin/env python3
"""
Exception hierarchy for the navigation engine.

Every error raised on purpose by the planning, coordination and scenario
layers derives from NavigationError so the CLI can map it to an exit code.
"""


class NavigationError(Exception):
    """Base class for navigation engine errors."""


class InvalidParameterError(NavigationError):
    """A construction parameter is outside its supported range."""


class PlanningError(NavigationError):
    """Base class for search failures."""


class NoPathError(PlanningError):
    """The goal cannot be reached on the lattice."""


class PlanningBudgetExceeded(NoPathError):
    """The expansion budget ran out before the goal was reached."""

    def __init__(self, expansions: int):
        super().__init__(f"expansion budget exhausted after {expansions} expansions")
        self.expansions = expansions


class InvalidQueryError(PlanningError):
    """Start or goal does not correspond to a valid lattice node."""


class NotOnPathError(NavigationError):
    """A pose does not coincide with any pose of a path."""
