"""Pulsating standing waves and effective interface coefficients for
periodic Allen-Cahn media."""

__version__ = "0.1.0"
