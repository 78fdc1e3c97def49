"""Numerical laboratory for two-forms and almost complex structures on flat tori."""

__version__ = "0.1.0"
