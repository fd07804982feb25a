"""Testing remodeling under heterogeneity: nearest-neighbour two-sample tests."""

__version__ = "0.1.0"
