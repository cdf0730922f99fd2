"""SA-Net spectral analysis engine."""

__version__ = "1.0.1"
