"""Blind-signature DoA estimation and two-location RF emitter localization."""

__version__ = "0.1.0"
