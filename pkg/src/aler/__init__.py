"""Partitioned active-learning pipeline for entity resolution."""

__version__ = "0.1.0"
