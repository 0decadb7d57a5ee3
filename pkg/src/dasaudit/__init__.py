"""Evaluation toolkit for census disclosure avoidance: swapping vs. DP noise,
BISG race inference, disclosure risk and redistricting population parity."""

__version__ = "0.1.0"
