"""Cooperative coordination of residential energy flexibility with multi-agent RL."""

__version__ = "0.1.0"
