"""Low-rank and sparse representations of parametrized function families."""

__version__ = "0.1.0"
