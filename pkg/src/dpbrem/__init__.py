"""Dynamic point blanking with a radio environment map and a deep Q-network."""

__version__ = "0.1.0"
