"""Local and resolution-limit-free NMF quality functions for graph clustering."""

__version__ = "0.1.0"
