"""Groupwise rigid registration of multimodal imaging sessions to an unbiased template."""

__version__ = "0.1.0"
