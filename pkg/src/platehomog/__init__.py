"""Periodic homogenization toolkit for heterogeneous thin plates."""

__version__ = "0.1.0"
