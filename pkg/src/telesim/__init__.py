"""Deterministic security testbed for a teleoperated surgical-robot control link."""

__version__ = "0.1.0"
