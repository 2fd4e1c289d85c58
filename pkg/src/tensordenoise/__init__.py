"""Tensor-factorization denoising against bounded adversarial perturbations."""

__version__ = "0.1.0"
