"""Iterative target augmentation with external filters."""

__version__ = "0.1.0"
