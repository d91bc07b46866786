"""Weak KAM tools for contact Hamilton-Jacobi equations on flat tori."""

__version__ = "0.1.0"
