"""Numerical comparison geometry: curvature of chart manifolds, Jacobi fields
along geodesics, and checks of comparison inequalities against model spaces."""

__version__ = "0.1.0"
