"""Randomized Kaczmarz methods for t-product tensor systems ``U * V * X = Y``."""

__version__ = "0.1.0"
