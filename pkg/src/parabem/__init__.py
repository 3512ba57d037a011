"""Parametric boundary-element toolkit for Helmholtz scattering.

Assembles and solves combined-field boundary integral equations on affinely
deformed surfaces, verifies parametric holomorphy of the resulting maps,
builds sparse Legendre surrogates, and evaluates Bayesian shape-inversion
posteriors.
"""

__version__ = "0.1.0"
