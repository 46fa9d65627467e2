"""Spatially-aware detection and repair of ``(lat, lon) -> attribute`` dependencies."""

__version__ = "0.1.0"
