"""Synthetic color-constancy datasets from calibration tables, plus baseline
estimators, angular-error metrics and experiment runners."""

__version__ = "0.1.0"
