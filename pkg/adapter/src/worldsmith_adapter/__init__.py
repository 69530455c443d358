"""Diffusion pipelines behind the worldsmith /v1 generation protocol."""

__version__ = "0.1.0"
