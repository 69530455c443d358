"""Canvas compositing and the blend planning pipeline.

The global canvas view is tiles pasted over a mid-gray background.  Blending
the world into one image needs two planes: that composite, and a mask that
is 0 over tile rectangles and 1 over empty space, softened by a Gaussian
blur so the generator reworks seams instead of leaving hard borders.  All
functions here are pure over arrays; session plumbing lives in the service.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

COMPOSITE_BACKGROUND = (128, 128, 128)

MIN_BLUR_SIGMA = 1.0
MAX_BLUR_SIGMA = 32.0

RectLike = Sequence[int]  # (x, y, w, h)


def _resample_filter(name: str):
    if name == "bilinear":
        return Image.Resampling.BILINEAR
    if name == "nearest":
        return Image.Resampling.NEAREST
    raise ValueError(f"unknown resample mode {name!r}")


def composite_tiles(
    canvas_size: tuple[int, int],
    layers: Iterable[tuple[RectLike, np.ndarray]],
    background: tuple[int, int, int] = COMPOSITE_BACKGROUND,
    resample: str = "bilinear",
) -> np.ndarray:
    """Paste tile images into their rects, later layers over earlier ones.

    Images are resized to their rect when dimensions differ.  Rects poking
    outside the canvas are clipped.
    """
    width, height = canvas_size
    canvas = np.empty((height, width, 3), dtype=np.uint8)
    canvas[:, :] = background
    filt = _resample_filter(resample)
    for rect, image in layers:
        x, y, w, h = (int(v) for v in rect)
        if w <= 0 or h <= 0:
            continue
        arr = np.asarray(image, dtype=np.uint8)
        if arr.shape[:2] != (h, w):
            resized = Image.fromarray(arr, mode="RGB").resize((w, h), filt)
            arr = np.asarray(resized, dtype=np.uint8)
        x0, y0 = max(x, 0), max(y, 0)
        x1, y1 = min(x + w, width), min(y + h, height)
        if x0 >= x1 or y0 >= y1:
            continue
        canvas[y0:y1, x0:x1] = arr[y0 - y : y1 - y, x0 - x : x1 - x]
    return canvas


def build_blend_mask(canvas_size: tuple[int, int], rects: Iterable[RectLike]) -> np.ndarray:
    """Binary plane: 0.0 inside tile rects, 1.0 over empty canvas."""
    width, height = canvas_size
    mask = np.ones((height, width), dtype=np.float64)
    for rect in rects:
        x, y, w, h = (int(v) for v in rect)
        x0, y0 = max(x, 0), max(y, 0)
        x1, y1 = min(x + w, width), min(y + h, height)
        if x0 < x1 and y0 < y1:
            mask[y0:y1, x0:x1] = 0.0
    return mask


def gaussian_blur(plane: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with clamp-to-edge borders.

    Kernel radius is ceil(3 * sigma) and the kernel is normalized to sum 1,
    so constant planes stay constant.  Sigma 0 returns an identical copy.
    """
    if sigma < 0:
        raise ValueError("blur sigma must be non-negative")
    arr = np.asarray(plane, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("blur expects a single 2-D plane")
    if sigma == 0:
        return arr.copy()
    radius = math.ceil(3 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets * offsets) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    out = _blur_axis(arr, kernel, radius, axis=1)
    return _blur_axis(out, kernel, radius, axis=0)


def _blur_axis(arr: np.ndarray, kernel: np.ndarray, radius: int, axis: int) -> np.ndarray:
    n = arr.shape[axis]
    base = np.arange(n)
    out = np.zeros_like(arr)
    for k in range(kernel.size):
        idx = np.clip(base + (k - radius), 0, n - 1)
        out += kernel[k] * np.take(arr, idx, axis=axis)
    return out


def default_blur_sigma(grid_gap: int) -> float:
    """Seam softness tracks the gap width: gap/4, clamped to [1, 32]."""
    return float(min(max(grid_gap / 4.0, MIN_BLUR_SIGMA), MAX_BLUR_SIGMA))


@dataclass
class BlendPlan:
    """Everything the backend needs to blend a world into one image."""

    width: int
    height: int
    base_image: np.ndarray  # uint8 (H, W, 3)
    blend_mask: np.ndarray  # float64 (H, W) in [0, 1]
    prompt: str
    blur_sigma: float


def make_blend_plan(
    canvas_size: tuple[int, int],
    layers: Sequence[tuple[RectLike, np.ndarray]],
    prompt: str,
    grid_gap: int,
    generation_size: tuple[int, int],
    blur_sigma: float | None = None,
) -> BlendPlan:
    """Compose the canvas, build the seam mask, and fit both to the
    generation window.

    Canvases larger than the window are downscaled with aspect preserved and
    centered; the letterboxed margin counts as empty space (mask 1) over the
    gray background.  The mask stays exactly binary until the final blur,
    whose sigma defaults from the grid gap and shrinks with the canvas.
    """
    canvas_w, canvas_h = canvas_size
    gen_w, gen_h = generation_size
    base_full = composite_tiles(canvas_size, layers)
    mask_full = build_blend_mask(canvas_size, [rect for rect, _ in layers])

    scale = min(gen_w / canvas_w, gen_h / canvas_h, 1.0)
    if scale < 1.0 or (canvas_w, canvas_h) != (gen_w, gen_h):
        content_w = max(1, round(canvas_w * scale))
        content_h = max(1, round(canvas_h * scale))
        off_x = (gen_w - content_w) // 2
        off_y = (gen_h - content_h) // 2
        base = np.empty((gen_h, gen_w, 3), dtype=np.uint8)
        base[:, :] = COMPOSITE_BACKGROUND
        resized = Image.fromarray(base_full, mode="RGB").resize(
            (content_w, content_h), Image.Resampling.BILINEAR
        )
        base[off_y : off_y + content_h, off_x : off_x + content_w] = np.asarray(resized)
        mask = np.ones((gen_h, gen_w), dtype=np.float64)
        mask_img = Image.fromarray((mask_full > 0.5).astype(np.uint8) * 255, mode="L")
        mask_small = mask_img.resize((content_w, content_h), Image.Resampling.NEAREST)
        mask[off_y : off_y + content_h, off_x : off_x + content_w] = (
            np.asarray(mask_small) > 127
        ).astype(np.float64)
    else:
        base = base_full
        mask = mask_full

    sigma = default_blur_sigma(grid_gap) if blur_sigma is None else float(blur_sigma)
    if sigma > 0 and scale < 1.0:
        sigma = min(max(sigma * scale, MIN_BLUR_SIGMA), MAX_BLUR_SIGMA)
    blurred = np.clip(gaussian_blur(mask, sigma), 0.0, 1.0)
    return BlendPlan(
        width=gen_w,
        height=gen_h,
        base_image=base,
        blend_mask=blurred,
        prompt=prompt,
        blur_sigma=sigma,
    )
