"""The /v1 generation request contract.

Four kinds, each with a strict shape:

* ``text2img``: prompt only
* ``img2img``: init image required, optional regions, no blend mask
* ``region_guided``: at least one region, nothing else
* ``blend``: init image plus grayscale mask, no regions

A request that breaks its kind contract is rejected before it ever reaches
a pipeline; the orchestration engine relies on getting a 422 for these, so
validation here mirrors its own.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imageio import PayloadError, gray_from_b64, mask_from_b64, rgb_from_b64

KINDS = ("text2img", "img2img", "region_guided", "blend")

DEFAULT_COUNT = 12
DEFAULT_STRENGTH = 0.65
MAX_SEED = 2**63 - 1


class WireError(ValueError):
    """A request document failed decoding or broke a kind contract."""


@dataclass
class RegionSpec:
    text: str
    mask: np.ndarray  # bool (H, W)


@dataclass
class GenerationTask:
    """A decoded, validated request, ready to hand to a pipeline."""

    kind: str
    prompt: str
    width: int
    height: int
    seed: int
    count: int = DEFAULT_COUNT
    strength: float = DEFAULT_STRENGTH
    regions: list[RegionSpec] = field(default_factory=list)
    init_image: np.ndarray | None = None  # uint8 (H, W, 3)
    mask_image: np.ndarray | None = None  # uint8 (H, W)


def parse_request(doc: dict) -> GenerationTask:
    """Decode a wire document and enforce the kind contracts."""
    try:
        regions = [
            RegionSpec(text=str(r["text"]), mask=mask_from_b64(r["mask_png_b64"]))
            for r in doc.get("regions", [])
        ]
        task = GenerationTask(
            kind=str(doc["kind"]),
            prompt=str(doc["prompt"]),
            width=int(doc["width"]),
            height=int(doc["height"]),
            seed=int(doc["seed"]),
            count=int(doc.get("count", DEFAULT_COUNT)),
            strength=float(doc.get("strength", DEFAULT_STRENGTH)),
            regions=regions,
            init_image=None
            if doc.get("init_image_png_b64") is None
            else rgb_from_b64(doc["init_image_png_b64"]),
            mask_image=None
            if doc.get("mask_png_b64") is None
            else gray_from_b64(doc["mask_png_b64"]),
        )
    except (KeyError, TypeError, ValueError, PayloadError) as exc:
        raise WireError(f"malformed request document: {exc}") from exc
    validate_task(task)
    return task


def validate_task(task: GenerationTask) -> None:
    if task.kind not in KINDS:
        raise WireError(f"unknown request kind {task.kind!r}")
    if task.width < 8 or task.height < 8:
        raise WireError("resolution must be at least 8x8")
    if task.count < 1:
        raise WireError("count must be at least 1")
    if not (0 <= task.seed <= MAX_SEED):
        raise WireError("seed must fit in 63 bits")
    if not (0.0 < task.strength <= 1.0):
        raise WireError("strength must be in (0, 1]")

    has_init = task.init_image is not None
    has_mask = task.mask_image is not None
    has_regions = bool(task.regions)
    if task.kind == "text2img" and (has_init or has_mask or has_regions):
        raise WireError("text2img takes a prompt only")
    if task.kind == "img2img":
        if not has_init:
            raise WireError("img2img requires an init image")
        if has_mask:
            raise WireError("img2img does not take a blend mask")
    if task.kind == "region_guided":
        if not has_regions:
            raise WireError("region_guided requires at least one region")
        if has_init or has_mask:
            raise WireError("region_guided takes regions only")
    if task.kind == "blend":
        if not (has_init and has_mask):
            raise WireError("blend requires both init image and mask")
        if has_regions:
            raise WireError("blend does not take regions")

    shape = (task.height, task.width)
    if has_init and task.init_image.shape != (*shape, 3):
        raise WireError("init image must match request resolution")
    if has_mask and task.mask_image.shape != shape:
        raise WireError("blend mask must match request resolution")
    for region in task.regions:
        if not region.text.strip():
            raise WireError("region conditions need a description")
        if region.mask.shape != shape:
            raise WireError("region masks must match request resolution")
