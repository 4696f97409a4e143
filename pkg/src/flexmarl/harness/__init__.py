"""Experiment runner, metrics, scaling benchmark and command-line interface."""
