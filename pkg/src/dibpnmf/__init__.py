"""Nonnegative matrix factorization with coupled Indian-buffet-process priors."""

__version__ = "0.1.0"
