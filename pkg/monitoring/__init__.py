"""Runtime configuration, episode metrics and anomaly alerts."""
