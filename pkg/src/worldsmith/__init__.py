"""Tiled world-canvas image generation engine and service."""
from __future__ import annotations

__version__ = "0.1.0"
