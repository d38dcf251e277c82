"""Scenario files, episode outputs and layout generators."""
