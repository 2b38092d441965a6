"""Shallow ReLU networks with stable-initialized weights: limits, kernels, training, checks."""

__version__ = "0.1.0"
