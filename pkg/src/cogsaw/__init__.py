"""Collaborative jigsaw rounds with an opinion-graph feedback engine."""

__version__ = "0.1.0"
