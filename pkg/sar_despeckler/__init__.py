"""Quadratic-linear approximated l1-TV despeckling for SAR images."""

__version__ = "0.1.0"
