"""Adapter configuration."""
from __future__ import annotations

from dataclasses import dataclass, field

from .wire import KINDS


@dataclass(frozen=True)
class AdapterConfig:
    """Everything tunable about the served pipeline.

    ``attention_weight`` scales the region text-to-mask bias: the
    procedural pipeline uses it directly as overlay opacity, the latent
    pipeline as the logit boost added inside each region's mask.
    ``mask_threshold`` converts the soft 8-bit blend plane into the binary
    inpaint mask latent pipelines require.
    """

    model: str = "procedural"
    device: str = "cpu"
    max_concurrent: int = 1
    steps: int = 30
    guidance: float = 7.5
    attention_weight: float = 0.7
    mask_threshold: float = 0.5
    kinds: tuple[str, ...] = KINDS
    max_resolution: int = 2048

    def __post_init__(self) -> None:
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be at least 1")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.guidance < 0:
            raise ValueError("guidance must be non-negative")
        if not (0.0 <= self.attention_weight <= 1.0):
            raise ValueError("attention_weight must be in [0, 1]")
        if not (0.0 < self.mask_threshold < 1.0):
            raise ValueError("mask_threshold must be in (0, 1)")
        if self.max_resolution < 8:
            raise ValueError("max_resolution must be at least 8")
        unknown = set(self.kinds) - set(KINDS)
        if unknown:
            raise ValueError(f"unknown request kinds {sorted(unknown)}")
        if not self.kinds:
            raise ValueError("at least one kind must be enabled")
