"""Numerical lab for a 1D logistic equation with indefinite weights and a sublinear boundary flux."""

__version__ = "0.1.0"
