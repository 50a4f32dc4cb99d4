"""Sound event detection with inter-frame distance domain adaptation."""

__version__ = "0.1.0"
