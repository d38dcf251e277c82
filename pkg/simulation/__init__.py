"""Lockstep multi-agent simulation."""
