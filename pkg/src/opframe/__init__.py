"""Operational probability models: from run logs to states, polytopes and representations."""

__version__ = "0.1.0"
