"""Dynamic network reconstruction from heterogeneous multi-experiment data."""

__version__ = "0.1.0"
