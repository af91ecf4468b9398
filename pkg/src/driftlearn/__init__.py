"""Learning SDE drift functions from a single high-frequency path."""

__version__ = "0.1.0"
