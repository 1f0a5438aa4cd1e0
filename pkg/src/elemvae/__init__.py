"""Latent-space representations of chemical elements with beta-VAEs."""

__version__ = "0.1.0"
