"""Periodic cocycles with squeezing: certificates, integrators and fibre reconstruction."""
__version__ = "0.1.0"
