"""Goal recognition design for grid worlds."""

__version__ = "0.1.0"
