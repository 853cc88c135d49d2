"""One-shot bimanual demonstration synthesis on a simulated tabletop workspace."""

__version__ = "0.1.0"
