"""Numerical laboratory for two-component attractive Gross-Pitaevskii
constraint minimization in 2D: ground profiles, energy functionals,
normalized gradient flow, closed-form blow-up asymptotics, and the
experiments that confront them with each other."""

__version__ = "0.1.0"
