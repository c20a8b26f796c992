"""Short-time one-point large deviations of KPZ with narrow-wedge data."""

__version__ = "0.1.0"
