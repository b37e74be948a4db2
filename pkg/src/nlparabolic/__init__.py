"""Numerical laboratory for fully nonlinear parabolic integro-differential equations.

Modules
-------
geometry    parabolic cubes, time-stacked unions, dyadic trees and the Calderon-Zygmund selection
gridfn      space-time lattices and grid functions
kernels     admissible kernels and quadrature weight tables
operators   second differences, linear, extremal (Pucci) and inf-sup nonlocal operators
evolution   explicit monotone time stepping with exterior data
barriers    explicit barrier subsolution, verification and parameter search
envelope    concave envelope, normal-map measure, ABP diagnostics, sup-convolution
estimators  level-set decay, Harnack quotients, oscillation decay, tangent paraboloids
families    deterministic data families for the harness
acceptance  the acceptance matrix
cli         command-line experiments
"""
__version__ = "0.1.0"
