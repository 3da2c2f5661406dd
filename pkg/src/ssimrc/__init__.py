"""SSIM-driven bit allocation and mode decision on a small block-transform codec."""

__version__ = "0.1.0"
