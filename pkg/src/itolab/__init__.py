"""Monte Carlo workbench for Brownian motion, Itô integrals and SDE-based PDE solvers."""

__version__ = "0.1.0"
