"""Multi-stage credit decision modeling toolkit."""

__version__ = "0.1.0"
