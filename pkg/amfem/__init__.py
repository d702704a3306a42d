"""Adaptive mixed finite elements for the top-degree Hodge-Laplace problem in 2-D."""

__version__ = "0.1.0"
