"""Bayesian bandwidth estimation for functional regression with mixed regressors."""

__version__ = "0.1.0"
