"""Coarse-graining workbench for slow-fast SDEs.

Implements and cross-validates three reductions of slow-fast stochastic
differential equations: averaging against the frozen process's ergodic law,
projection against the equilibrium conditional density, and the
mimicking-marginal (Gyongy) reduction against time-t conditional laws, with
exact linear-Gaussian engines, Monte Carlo estimators, and Fokker-Planck
diagnostics.
"""

__version__ = "0.1.0"
