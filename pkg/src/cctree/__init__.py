"""Cluster Center Trees for proximity search under the continuous Frechet distance."""

__version__ = "0.1.0"
