"""Desk-scale disaster tweet collection and analysis pipeline."""

__version__ = "0.1.0"
