"""Hourly step-goal prediction from activity-tracker logs."""

__version__ = "0.1.0"
