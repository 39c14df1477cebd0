"""Constrained charges on a circle: Dirac brackets, quantization and
uncertainty bounds for entangled two- and three-particle states."""

__version__ = "0.1.0"
