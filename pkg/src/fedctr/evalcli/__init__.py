"""Metrics, experiment runners, reports and the command-line interface."""
