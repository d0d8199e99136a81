"""Monocular semantic scene completion in normalized device coordinates."""

__version__ = "0.1.0"
