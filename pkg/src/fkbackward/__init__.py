"""Sequential Monte Carlo smoothing of additive functionals for Feynman-Kac models."""

__version__ = "0.1.0"
