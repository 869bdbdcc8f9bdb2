"""Tabular laboratory for emotion-aware constrained reinforcement learning."""

__version__ = "0.1.0"
