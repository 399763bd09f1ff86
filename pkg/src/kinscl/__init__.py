"""Kinetic-formulation solvers and verification for stochastic scalar conservation laws."""
__version__ = "0.1.0"
