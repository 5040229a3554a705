"""Fragmented federated learning: fragment exchange, reputation defense and simulation."""

__version__ = "0.1.0"
