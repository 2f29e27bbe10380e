"""Two-stage direct-detection / binary mode-sorting receiver for sub-Rayleigh imaging."""

__version__ = "0.1.0"
