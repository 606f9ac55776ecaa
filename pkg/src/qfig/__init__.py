"""Monotone quantum Fisher metrics, chi-square divergences and Petz-type recovery."""
__version__ = "0.1.0"
