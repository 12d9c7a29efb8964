"""Sparse regression on ARMA-filtered predictors for serially correlated panels."""
from .errors import ArmarLabError, ConfigError, DataError, NumericalError

__all__ = ["ArmarLabError", "ConfigError", "DataError", "NumericalError"]
