"""Battery charge scheduling that trades energy cost against degradation."""

__version__ = "0.1.0"
