"""Deterministic headless multicopter racing simulator."""

__version__ = "0.1.0"
