"""Guidance toolkit for buoyancy-controlled vehicles drifting in uncertain
3-D flow fields: stochastic flow models, interpolated value iteration,
belief-averaged depth selection, and Monte Carlo policy evaluation."""

__version__ = "0.1.0"
