"""Goal-oriented object-guessing dialogue agent with belief-state tracking."""

__version__ = "0.1.0"
