"""Skill discovery by simulating tasks against a scriptable application."""

__version__ = "0.1.0"
