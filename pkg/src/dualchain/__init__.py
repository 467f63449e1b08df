"""Simulator and protocol library for a summary-syncing market sidechain."""

__version__ = "0.1.0"
