"""Hierarchical orthonormal bases distilled from DeepONet trunk networks,
and a spectral Galerkin solver for 1-D periodic PDEs that uses them."""

__version__ = "0.1.0"
