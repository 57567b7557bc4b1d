"""Desk-scale diffusion sandbox with compensation sampling."""

__version__ = "0.1.0"
