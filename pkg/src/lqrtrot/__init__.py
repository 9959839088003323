"""Legged trotting stack: LIPM foothold MPC, projected inverse dynamics and per-cycle LQR."""

__version__ = "0.1.0"
