"""Image pipelines: the procedural default and the lazy latent-diffusion path.

The procedural pipeline is pure numpy and fully deterministic: the same
task always renders the same bytes on any machine. It exists so the whole
stack (and its tests) runs without a GPU, while still honoring every task
field the way a real model would: seeds select outcomes, strength mixes
against the init image, regions bias their masked pixels toward the region
text, and blend rewrites only what the mask allows.
"""
from __future__ import annotations

import hashlib
from typing import Protocol

import numpy as np
from PIL import Image

from .config import AdapterConfig
from .wire import GenerationTask


class Pipeline(Protocol):
    """What the service requires of any image producer."""

    name: str
    kinds: tuple[str, ...]

    def run(self, task: GenerationTask) -> list[np.ndarray]: ...


def _text_key(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


def text_color(text: str) -> np.ndarray:
    """Stable display color for a piece of guidance text."""
    key = hashlib.sha256(text.encode("utf-8")).digest()
    return np.array([key[0], key[8], key[16]], dtype=np.float64)


class ProceduralPipeline:
    """Deterministic stand-in renderer implementing all four kinds."""

    name = "procedural"
    kinds = ("text2img", "img2img", "region_guided", "blend")

    # lattice spacing of the low-frequency field, in output pixels
    CELL = 12

    def __init__(self, config: AdapterConfig | None = None) -> None:
        self._config = config or AdapterConfig()

    def _field(self, task: GenerationTask, index: int) -> np.ndarray:
        """Smooth RGB base field seeded by (prompt, seed, index)."""
        rng = np.random.default_rng([_text_key(task.prompt), task.seed, index])
        gw = task.width // self.CELL + 2
        gh = task.height // self.CELL + 2
        lattice = rng.integers(0, 256, size=(gh, gw, 3), dtype=np.uint8)
        img = Image.fromarray(lattice, mode="RGB").resize(
            (task.width, task.height), Image.Resampling.BILINEAR)
        base = np.asarray(img, dtype=np.float64)
        tint = text_color(task.prompt)
        return 0.75 * base + 0.25 * tint[None, None, :]

    def run(self, task: GenerationTask) -> list[np.ndarray]:
        weight = self._config.attention_weight
        out: list[np.ndarray] = []
        for index in range(task.count):
            image = self._field(task, index)
            if task.kind == "img2img":
                init = np.asarray(task.init_image, dtype=np.float64)
                image = (1.0 - task.strength) * init + task.strength * image
            elif task.kind == "blend":
                # soft plane as compositing alpha: untouched where 0,
                # fully regenerated where 255 (strength 1.0 in the mask)
                init = np.asarray(task.init_image, dtype=np.float64)
                alpha = (np.asarray(task.mask_image, dtype=np.float64) / 255.0)[:, :, None]
                image = init * (1.0 - alpha) + image * alpha
            for region in task.regions:
                color = text_color(region.text)[None, None, :]
                sel = region.mask
                image[sel] = (1.0 - weight) * image[sel] + weight * color
            out.append(np.rint(np.clip(image, 0, 255)).astype(np.uint8))
        return out


def make_pipeline(config: AdapterConfig) -> Pipeline:
    """Build the pipeline the config names.

    ``procedural`` is always available; any other model identifier selects
    the latent-diffusion path, which needs the ``diffusion`` extra
    installed and weights reachable.
    """
    if config.model == "procedural":
        return ProceduralPipeline(config)
    from .diffusion import DiffusersPipeline

    return DiffusersPipeline(config)
