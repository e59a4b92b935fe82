"""Deterministic discrete-event simulator of a hierarchical software-defined
control architecture: controllers over LTI plants, middleware scheduling,
attack/defense pipeline, and reproducible scaling experiments."""

__version__ = "0.1.0"
