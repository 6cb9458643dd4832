"""Crack identification from strain sensors with holomorphic neural networks."""

__version__ = "0.1.0"
