"""Text-driven synthetic tumor generation for 3D CT volumes."""

__version__ = "0.1.0"
