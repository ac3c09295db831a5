"""cmalab: numerics for the complex Monge-Ampere Dirichlet problem."""

__version__ = "0.1.0"
