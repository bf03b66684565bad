"""Comfortability index estimation from physiological signals."""
__version__ = "0.1.0"
