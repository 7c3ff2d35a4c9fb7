"""Stochastic vehicle routing with time windows, random customers and
random reveal times: first-stage routes with waiting times, recourse
strategies, exact expected costs and local search."""

__version__ = "0.1.0"
