"""Robust Gaussian-process surrogates for time-series stochastic power flow."""
