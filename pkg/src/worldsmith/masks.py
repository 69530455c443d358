"""Brush rasterization and multi-region segmentation maps.

Painted regions live in two forms.  Each region individually is a binary
mask produced by one of three brushes: pencil (a swept disc along the
stroke), hull (the filled convex hull of the points), and lasso (the
even-odd filled free polygon).  A tile's regions together flatten into one
RGB segmentation map where each region paints its assigned color, later
regions win overlaps, and black is reserved for unpainted background.  The
flat map decomposes back into per-region binary masks for the generation
backend.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import geometry, pngio

Color = tuple[int, int, int]

BACKGROUND_COLOR: Color = (0, 0, 0)

# 12 evenly spaced hues, all far from the reserved background black
REGION_PALETTE: tuple[Color, ...] = (
    (242, 48, 48),
    (242, 145, 48),
    (242, 242, 48),
    (145, 242, 48),
    (48, 242, 48),
    (48, 242, 145),
    (48, 242, 242),
    (48, 145, 242),
    (48, 48, 242),
    (145, 48, 242),
    (242, 48, 242),
    (242, 48, 145),
)


@dataclass
class BinaryMask:
    """One region's footprint: a boolean grid plus its dimensions."""

    width: int
    height: int
    bits: np.ndarray

    def __post_init__(self) -> None:
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.shape != (self.height, self.width):
            raise ValueError("mask bits do not match declared dimensions")

    @classmethod
    def blank(cls, width: int, height: int) -> "BinaryMask":
        return cls(width, height, np.zeros((height, width), dtype=bool))

    def count(self) -> int:
        return int(self.bits.sum())

    def to_png(self) -> bytes:
        return pngio.encode_mask_png(self.bits)

    @classmethod
    def from_png(cls, data: bytes) -> "BinaryMask":
        bits = pngio.decode_mask_png(data)
        return cls(bits.shape[1], bits.shape[0], bits)


def rasterize_pencil(
    points: Sequence[Sequence[float]], stroke_width: int, width: int, height: int
) -> BinaryMask:
    """Sweep a disc of the stroke width along the snapped polyline."""
    if stroke_width < 1:
        raise ValueError("pencil stroke width must be at least 1")
    snapped = [geometry.snap_center(p, width, height) for p in points]
    bits = geometry.stroke_mask(snapped, float(stroke_width), width, height)
    return BinaryMask(width, height, bits)


def rasterize_hull(
    points: Sequence[Sequence[float]], width: int, height: int
) -> BinaryMask:
    """Fill the convex hull of the snapped points.

    Hulls that collapse to a point or segment degrade to a one-pixel stroke.
    """
    snapped = [geometry.snap_center(p, width, height) for p in points]
    hull = geometry.convex_hull(snapped)
    if len(hull) < 3:
        bits = geometry.stroke_mask(hull, 1.0, width, height) if hull else np.zeros(
            (height, width), dtype=bool
        )
        return BinaryMask(width, height, bits)
    bits = geometry.polygon_region_mask(hull, width, height)
    return BinaryMask(width, height, bits)


def rasterize_lasso(
    points: Sequence[Sequence[float]], width: int, height: int
) -> BinaryMask:
    """Fill the free polygon as drawn, auto-closed, even-odd on self-crossings."""
    snapped = [geometry.snap_center(p, width, height) for p in points]
    if not snapped:
        return BinaryMask.blank(width, height)
    distinct = list(dict.fromkeys(snapped))
    if len(distinct) < 3:
        bits = geometry.stroke_mask(snapped, 1.0, width, height)
        return BinaryMask(width, height, bits)
    bits = geometry.polygon_region_mask(snapped, width, height)
    return BinaryMask(width, height, bits)


@dataclass(frozen=True)
class PaletteEntry:
    region_id: str
    color: Color
    description: str


@dataclass
class Segmentation:
    """Flattened multi-region map: RGB pixels plus the palette that owns them."""

    width: int
    height: int
    pixels: np.ndarray
    palette: list[PaletteEntry] = field(default_factory=list)

    def to_png(self) -> bytes:
        return pngio.encode_rgb_png(self.pixels)

    def palette_json(self) -> str:
        entries = [
            {"region_id": e.region_id, "color": list(e.color), "description": e.description}
            for e in self.palette
        ]
        return json.dumps(entries)

    @classmethod
    def from_png(cls, data: bytes, palette_json: str) -> "Segmentation":
        pixels = pngio.decode_rgb_png(data)
        palette = [
            PaletteEntry(e["region_id"], tuple(e["color"]), e["description"])
            for e in json.loads(palette_json)
        ]
        return cls(pixels.shape[1], pixels.shape[0], pixels, palette)


def compose_segmentation(
    regions: Iterable[tuple[str, Color, str, BinaryMask]],
    width: int,
    height: int,
) -> Segmentation:
    """Paint regions onto a black canvas in order; the last painter wins.

    Region colors must be unique and must not be the reserved background
    black.  Masks must match the canvas dimensions.
    """
    pixels = np.zeros((height, width, 3), dtype=np.uint8)
    palette: list[PaletteEntry] = []
    seen: set[Color] = set()
    for region_id, color, description, mask in regions:
        color = (int(color[0]), int(color[1]), int(color[2]))
        if color == BACKGROUND_COLOR:
            raise ValueError(f"region {region_id} uses the reserved background color")
        if color in seen:
            raise ValueError(f"region {region_id} duplicates color {color}")
        if (mask.width, mask.height) != (width, height):
            raise ValueError(f"region {region_id} mask does not match canvas size")
        seen.add(color)
        pixels[mask.bits] = color
        palette.append(PaletteEntry(region_id, color, description))
    return Segmentation(width, height, pixels, palette)


def extract_binary_masks(seg: Segmentation) -> list[tuple[str, str, BinaryMask]]:
    """Recover one binary mask per palette entry from the flattened map.

    White bits are the pixels currently owned by that region's color, so
    fully overpainted regions come back empty.  The returned masks are
    pairwise disjoint and their union is exactly the painted (non-black)
    area.
    """
    out: list[tuple[str, str, BinaryMask]] = []
    for entry in seg.palette:
        color = np.array(entry.color, dtype=np.uint8)
        bits = (seg.pixels == color).all(axis=2)
        out.append((entry.region_id, entry.description, BinaryMask(seg.width, seg.height, bits)))
    return out


def next_palette_color(in_use: Iterable[Color]) -> Color:
    """First palette color not already claimed by another region."""
    used = set(in_use)
    for color in REGION_PALETTE:
        if color not in used:
            return color
    raise ValueError("region palette exhausted: all 12 colors are in use")
