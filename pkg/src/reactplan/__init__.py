"""Reactive answer-set task planning for a simulated mail-delivery robot."""

__version__ = "0.1.0"
