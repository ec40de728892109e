"""Interference prediction for URLLC link adaptation.

A multi-cell downlink simulator producing per-TTI interference power values
(IPVs), diffusion-bandwidth kernel density estimates of their marginal and
one-step joint distributions, and predictors of the next IPV built on them.
"""

__version__ = "0.1.0"
