"""Numerical toolkit for finitely generated groups of circle diffeomorphisms."""

__version__ = "0.1.0"
