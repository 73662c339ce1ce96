"""Missing-mass estimation for discrete distributions on the positive integers."""

__version__ = "0.1.0"
