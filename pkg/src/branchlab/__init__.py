"""Markov branching trees, splitting laws and their scaling checks."""

__version__ = "0.1.0"
