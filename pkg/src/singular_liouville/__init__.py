"""Blow-up solutions of a singular Liouville problem by Lyapunov-Schmidt reduction."""

__version__ = "0.1.0"
