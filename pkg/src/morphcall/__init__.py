"""Morphosyntactic probing suite: UD-derived task generation, perturbation
synthesis, and linear-probe analysis over externally extracted hidden states."""

__version__ = "0.1.0"
