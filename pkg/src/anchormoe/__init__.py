"""Anchored mixture-of-experts probabilistic regression."""

__version__ = "0.1.0"
