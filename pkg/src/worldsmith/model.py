"""Core domain model: sessions, tiles, brushes, and generation inputs.

A world session is a large canvas holding movable, resizable image tiles
laid out on a near-square grid.  Each tile owns a working input state (scene
prompt, painted regions, sketch layer, an optional base image, seed and
strength) plus a branching history tree of every state it generated from.
The session level adds the grid gap slider and the global blend prompt.

Input states serialize through the canonical encoder so that equality is
digest equality, which drives both history bookkeeping and change detection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import masks
from .canonical import (
    CanonicalSnapshot,
    FieldReader,
    FieldWriter,
    decode_f64,
    decode_i64,
    decode_text,
    decode_u64,
    image_content_id,
    make_snapshot,
)
from .masks import BinaryMask, Color
from .tree import ImageRef, TileTree

MIN_TILE_SIZE = 16

DEFAULT_CANVAS = (1024, 1024)
DEFAULT_TILE_COUNT = 4
DEFAULT_RESOLUTION = 512
DEFAULT_GRID_GAP = 32
DEFAULT_STRENGTH = 0.65

BRUSHES = ("pencil", "hull", "lasso")


class ModelError(ValueError):
    """Invalid session geometry or inputs."""


@dataclass
class TileRect:
    x: int
    y: int
    w: int
    h: int

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}

    @classmethod
    def from_dict(cls, doc: dict) -> "TileRect":
        return cls(int(doc["x"]), int(doc["y"]), int(doc["w"]), int(doc["h"]))

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)

    @property
    def area(self) -> int:
        return self.w * self.h


@dataclass
class BrushAction:
    """One captured stroke: which brush, the raw points, pencil width."""

    brush: str
    points: list[tuple[float, float]]
    stroke_width: int | None = None

    def validate(self) -> None:
        if self.brush not in BRUSHES:
            raise ModelError(f"unknown brush {self.brush!r}")
        if not self.points:
            raise ModelError("brush action has no points")
        if self.brush == "pencil":
            if self.stroke_width is None or self.stroke_width < 1:
                raise ModelError("pencil actions need a positive stroke width")

    def to_dict(self) -> dict:
        doc = {"brush": self.brush, "points": [[p[0], p[1]] for p in self.points]}
        if self.stroke_width is not None:
            doc["stroke_width"] = self.stroke_width
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "BrushAction":
        return cls(
            brush=str(doc["brush"]),
            points=[(float(p[0]), float(p[1])) for p in doc["points"]],
            stroke_width=None if doc.get("stroke_width") is None else int(doc["stroke_width"]),
        )


@dataclass
class RegionSpec:
    """A painted region: identity, palette color, text, and its strokes."""

    region_id: str
    color: Color
    description: str
    actions: list[BrushAction] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "region_id": self.region_id,
            "color": list(self.color),
            "description": self.description,
            "actions": [a.to_dict() for a in self.actions],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RegionSpec":
        return cls(
            region_id=str(doc["region_id"]),
            color=(int(doc["color"][0]), int(doc["color"][1]), int(doc["color"][2])),
            description=str(doc.get("description", "")),
            actions=[BrushAction.from_dict(a) for a in doc.get("actions", [])],
        )


def region_mask(region: RegionSpec, width: int, height: int) -> BinaryMask:
    """Union of all the region's strokes, rasterized at the given size."""
    bits = np.zeros((height, width), dtype=bool)
    for action in region.actions:
        action.validate()
        if action.brush == "pencil":
            m = masks.rasterize_pencil(action.points, action.stroke_width, width, height)
        elif action.brush == "hull":
            m = masks.rasterize_hull(action.points, width, height)
        else:
            m = masks.rasterize_lasso(action.points, width, height)
        bits |= m.bits
    return BinaryMask(width, height, bits)


@dataclass
class SketchLayer:
    """Free-hand RGB drawing plus the coverage of actually painted pixels."""

    image: np.ndarray  # uint8 (H, W, 3)
    coverage: np.ndarray  # bool (H, W)

    def __post_init__(self) -> None:
        self.image = np.asarray(self.image, dtype=np.uint8)
        self.coverage = np.asarray(self.coverage, dtype=bool)
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ModelError("sketch image must be (H, W, 3) uint8")
        if self.coverage.shape != self.image.shape[:2]:
            raise ModelError("sketch coverage does not match image dimensions")

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def height(self) -> int:
        return self.image.shape[0]

    def to_rgba(self) -> np.ndarray:
        rgba = np.zeros((self.height, self.width, 4), dtype=np.uint8)
        rgba[:, :, :3] = self.image
        rgba[:, :, 3] = np.where(self.coverage, 255, 0)
        return rgba

    @classmethod
    def from_rgba(cls, rgba: np.ndarray) -> "SketchLayer":
        rgba = np.asarray(rgba, dtype=np.uint8)
        return cls(image=rgba[:, :, :3].copy(), coverage=rgba[:, :, 3] > 127)

    def content_id(self) -> str:
        return image_content_id(self.to_rgba())


@dataclass
class GenerationInputs:
    """Everything a single tile generation depends on."""

    scene_prompt: str = ""
    regions: list[RegionSpec] = field(default_factory=list)
    sketch: SketchLayer | None = None
    base_image: ImageRef | None = None
    seed: int | None = None
    strength: float = DEFAULT_STRENGTH

    def copy(self) -> "GenerationInputs":
        return GenerationInputs(
            scene_prompt=self.scene_prompt,
            regions=[
                RegionSpec(
                    r.region_id,
                    r.color,
                    r.description,
                    [BrushAction(a.brush, list(a.points), a.stroke_width) for a in r.actions],
                )
                for r in self.regions
            ],
            sketch=None
            if self.sketch is None
            else SketchLayer(self.sketch.image.copy(), self.sketch.coverage.copy()),
            base_image=self.base_image,
            seed=self.seed,
            strength=self.strength,
        )


# canonical field tags for GenerationInputs
_TAG_SCENE = 1
_TAG_REGIONS = 2
_TAG_REGION = 3
_TAG_REGION_ID = 4
_TAG_COLOR = 5
_TAG_DESCRIPTION = 6
_TAG_ACTIONS = 7
_TAG_ACTION = 8
_TAG_BRUSH = 9
_TAG_STROKE_WIDTH = 10
_TAG_POINTS = 11
_TAG_SKETCH = 12
_TAG_SKETCH_DIMS = 13
_TAG_SKETCH_CONTENT = 14
_TAG_BASE_IMAGE = 15
_TAG_SEED = 16
_TAG_STRENGTH = 17


def encode_inputs(inputs: GenerationInputs) -> bytes:
    """Canonical byte encoding; sketch pixels enter by content id only."""
    w = FieldWriter()
    w.text(_TAG_SCENE, inputs.scene_prompt)

    regions = FieldWriter()
    for region in inputs.regions:
        r = FieldWriter()
        r.text(_TAG_REGION_ID, region.region_id)
        r.raw(_TAG_COLOR, bytes(region.color))
        r.text(_TAG_DESCRIPTION, region.description)
        actions = FieldWriter()
        for action in region.actions:
            a = FieldWriter()
            a.text(_TAG_BRUSH, action.brush)
            if action.stroke_width is not None:
                a.u64(_TAG_STROKE_WIDTH, action.stroke_width)
            pts = FieldWriter()
            for px, py in action.points:
                pts.f64(0, px)
                pts.f64(0, py)
            a.nested(_TAG_POINTS, pts)
            actions.nested(_TAG_ACTION, a)
        r.nested(_TAG_ACTIONS, actions)
        regions.nested(_TAG_REGION, r)
    w.nested(_TAG_REGIONS, regions)

    if inputs.sketch is not None:
        s = FieldWriter()
        s.u64(_TAG_SKETCH_DIMS, (inputs.sketch.width << 32) | inputs.sketch.height)
        s.text(_TAG_SKETCH_CONTENT, inputs.sketch.content_id())
        w.nested(_TAG_SKETCH, s)
    if inputs.base_image is not None:
        b = FieldWriter()
        b.text(_TAG_SKETCH_CONTENT, inputs.base_image.image_id)
        b.u64(_TAG_SKETCH_DIMS, (inputs.base_image.width << 32) | inputs.base_image.height)
        w.nested(_TAG_BASE_IMAGE, b)
    if inputs.seed is not None:
        w.i64(_TAG_SEED, inputs.seed)
    w.f64(_TAG_STRENGTH, inputs.strength)
    return w.getvalue()


def canonicalize_inputs(inputs: GenerationInputs) -> CanonicalSnapshot:
    return make_snapshot(encode_inputs(inputs))


SketchResolver = Callable[[str, int, int], SketchLayer]


def decode_inputs(data: bytes, resolve_sketch: SketchResolver | None = None) -> GenerationInputs:
    """Rebuild inputs from canonical bytes.

    Point coordinates come back at the encoder's six-decimal precision.
    Sketch pixels are stored out of line, so decoding a snapshot that has a
    sketch requires a resolver from content id to layer.
    """
    reader = FieldReader(data)
    scene = decode_text(reader.expect(_TAG_SCENE))

    regions: list[RegionSpec] = []
    regions_reader = FieldReader(reader.expect(_TAG_REGIONS))
    while not regions_reader.done():
        r = FieldReader(regions_reader.expect(_TAG_REGION))
        region_id = decode_text(r.expect(_TAG_REGION_ID))
        color_bytes = r.expect(_TAG_COLOR)
        description = decode_text(r.expect(_TAG_DESCRIPTION))
        actions: list[BrushAction] = []
        actions_reader = FieldReader(r.expect(_TAG_ACTIONS))
        while not actions_reader.done():
            a = FieldReader(actions_reader.expect(_TAG_ACTION))
            brush = decode_text(a.expect(_TAG_BRUSH))
            stroke_payload = a.take(_TAG_STROKE_WIDTH)
            stroke = None if stroke_payload is None else decode_u64(stroke_payload)
            pts_reader = FieldReader(a.expect(_TAG_POINTS))
            flat: list[float] = []
            while not pts_reader.done():
                _, payload = pts_reader.next_field()
                flat.append(decode_f64(payload))
            points = [(flat[i], flat[i + 1]) for i in range(0, len(flat), 2)]
            actions.append(BrushAction(brush, points, stroke))
        regions.append(
            RegionSpec(region_id, (color_bytes[0], color_bytes[1], color_bytes[2]), description, actions)
        )

    sketch: SketchLayer | None = None
    sketch_payload = reader.take(_TAG_SKETCH)
    if sketch_payload is not None:
        s = FieldReader(sketch_payload)
        dims = decode_u64(s.expect(_TAG_SKETCH_DIMS))
        width, height = dims >> 32, dims & 0xFFFFFFFF
        content = decode_text(s.expect(_TAG_SKETCH_CONTENT))
        if resolve_sketch is None:
            raise ModelError("snapshot has a sketch layer but no resolver was given")
        sketch = resolve_sketch(content, width, height)

    base: ImageRef | None = None
    base_payload = reader.take(_TAG_BASE_IMAGE)
    if base_payload is not None:
        b = FieldReader(base_payload)
        image_id = decode_text(b.expect(_TAG_SKETCH_CONTENT))
        dims = decode_u64(b.expect(_TAG_SKETCH_DIMS))
        base = ImageRef(image_id, dims >> 32, dims & 0xFFFFFFFF)

    seed_payload = reader.take(_TAG_SEED)
    seed = None if seed_payload is None else decode_i64(seed_payload)
    strength = decode_f64(reader.expect(_TAG_STRENGTH))
    return GenerationInputs(scene, regions, sketch, base, seed, strength)


def preview_label(inputs: GenerationInputs, limit: int = 80) -> str:
    """Short human-readable summary used as the tree node label."""
    parts = [inputs.scene_prompt.strip()]
    parts += [r.description.strip() for r in inputs.regions if r.description.strip()]
    text = " / ".join(p for p in parts if p)
    return text[:limit]


def infer_request_kind(inputs: GenerationInputs) -> str:
    """Pick the backend route from what the user actually provided.

    Sketch or base image content makes it an image-to-image run (regions, if
    any, ride along); regions alone are region-guided; otherwise plain text.
    """
    if inputs.sketch is not None or inputs.base_image is not None:
        return "img2img"
    if inputs.regions:
        return "region_guided"
    return "text2img"


@dataclass
class Tile:
    tile_id: str
    rect: TileRect
    grid_slot: tuple[int, int] | None
    inputs: GenerationInputs
    tree: TileTree
    current_image: ImageRef | None = None
    next_region_ordinal: int = 0


@dataclass
class WorldSession:
    session_id: str
    canvas_width: int
    canvas_height: int
    generation_resolution: int
    grid_gap: int
    grid_rows: int
    grid_cols: int
    blend_prompt: str = ""
    tiles: dict[str, Tile] = field(default_factory=dict)

    def tile(self, tile_id: str) -> Tile:
        try:
            return self.tiles[tile_id]
        except KeyError:
            raise ModelError(f"unknown tile {tile_id!r}") from None

    def tile_list(self) -> list[Tile]:
        return list(self.tiles.values())


def plan_grid(canvas_w: int, canvas_h: int, count: int) -> tuple[int, int]:
    """Rows and columns whose cells come closest to square."""
    best: tuple[float, int, int] | None = None
    for cols in range(1, count + 1):
        rows = math.ceil(count / cols)
        cell_w = canvas_w / cols
        cell_h = canvas_h / rows
        skew = max(cell_w / cell_h, cell_h / cell_w)
        if best is None or (skew, cols) < (best[0], best[2]):
            best = (skew, rows, cols)
    assert best is not None
    return best[1], best[2]


def grid_rects(
    canvas_w: int, canvas_h: int, rows: int, cols: int, count: int, gap: int
) -> list[TileRect]:
    """Tile rects for the grid: equal cells separated by the gap, flush to
    the canvas edges.  Division remainders become extra empty space at the
    right and bottom."""
    if gap < 0:
        raise ModelError("grid gap must be non-negative")
    tile_w = (canvas_w - gap * (cols - 1)) // cols
    tile_h = (canvas_h - gap * (rows - 1)) // rows
    if tile_w < MIN_TILE_SIZE or tile_h < MIN_TILE_SIZE:
        raise ModelError("grid gap leaves tiles below the minimum size")
    rects = []
    for i in range(count):
        row, col = divmod(i, cols)
        rects.append(TileRect(col * (tile_w + gap), row * (tile_h + gap), tile_w, tile_h))
    return rects


def create_session(
    session_id: str,
    canvas_size: tuple[int, int] = DEFAULT_CANVAS,
    tile_count: int = DEFAULT_TILE_COUNT,
    generation_resolution: int = DEFAULT_RESOLUTION,
    grid_gap: int = DEFAULT_GRID_GAP,
) -> WorldSession:
    """New session with tiles laid out on the near-square grid.

    Tile ids are deterministic ("t0", "t1", ...) so that a session replayed
    elsewhere addresses the same tiles.
    """
    canvas_w, canvas_h = canvas_size
    if canvas_w < MIN_TILE_SIZE or canvas_h < MIN_TILE_SIZE:
        raise ModelError("canvas is below the minimum tile size")
    if tile_count < 1:
        raise ModelError("a session needs at least one tile")
    if generation_resolution < 8:
        raise ModelError("generation resolution is too small")
    rows, cols = plan_grid(canvas_w, canvas_h, tile_count)
    rects = grid_rects(canvas_w, canvas_h, rows, cols, tile_count, grid_gap)
    session = WorldSession(
        session_id=session_id,
        canvas_width=canvas_w,
        canvas_height=canvas_h,
        generation_resolution=generation_resolution,
        grid_gap=grid_gap,
        grid_rows=rows,
        grid_cols=cols,
    )
    empty_snapshot = canonicalize_inputs(GenerationInputs())
    for i, rect in enumerate(rects):
        row_col = divmod(i, cols)
        tile = Tile(
            tile_id=f"t{i}",
            rect=rect,
            grid_slot=row_col,
            inputs=GenerationInputs(),
            tree=TileTree(empty_snapshot),
        )
        session.tiles[tile.tile_id] = tile
    return session


def move_resize_tile(session: WorldSession, tile_id: str, rect: TileRect) -> None:
    """Reposition or scale a tile; it leaves the managed grid by doing so."""
    tile = session.tile(tile_id)
    if rect.w < MIN_TILE_SIZE or rect.h < MIN_TILE_SIZE:
        raise ModelError(f"tile below minimum size {MIN_TILE_SIZE}")
    if rect.x < 0 or rect.y < 0:
        raise ModelError("tile rect extends outside the canvas")
    if rect.x + rect.w > session.canvas_width or rect.y + rect.h > session.canvas_height:
        raise ModelError("tile rect extends outside the canvas")
    tile.rect = rect
    tile.grid_slot = None


def set_grid_gap(session: WorldSession, gap: int) -> None:
    """Re-space tiles still in their grid slots; hand-moved tiles stay put."""
    rows, cols = session.grid_rows, session.grid_cols
    count = len(session.tiles)
    rects = grid_rects(session.canvas_width, session.canvas_height, rows, cols, count, gap)
    session.grid_gap = gap
    for i, tile in enumerate(session.tile_list()):
        if tile.grid_slot is not None:
            tile.rect = rects[i]


def add_region(tile: Tile, description: str, actions: list[BrushAction]) -> RegionSpec:
    """New painted region with the next free palette color and id."""
    for action in actions:
        action.validate()
    color = masks.next_palette_color(r.color for r in tile.inputs.regions)
    region = RegionSpec(
        region_id=f"r{tile.next_region_ordinal}",
        color=color,
        description=description,
        actions=actions,
    )
    tile.next_region_ordinal += 1
    tile.inputs.regions.append(region)
    return region


def session_to_dict(session: WorldSession) -> dict:
    """JSON-ready session state; trees and sketch pixels live elsewhere."""
    return {
        "session_id": session.session_id,
        "canvas_width": session.canvas_width,
        "canvas_height": session.canvas_height,
        "generation_resolution": session.generation_resolution,
        "grid_gap": session.grid_gap,
        "grid_rows": session.grid_rows,
        "grid_cols": session.grid_cols,
        "blend_prompt": session.blend_prompt,
        "tiles": [
            {
                "tile_id": t.tile_id,
                "rect": t.rect.to_dict(),
                "grid_slot": None if t.grid_slot is None else list(t.grid_slot),
                "next_region_ordinal": t.next_region_ordinal,
                "current_image": None if t.current_image is None else t.current_image.to_dict(),
                "inputs": {
                    "scene_prompt": t.inputs.scene_prompt,
                    "regions": [r.to_dict() for r in t.inputs.regions],
                    "sketch": None
                    if t.inputs.sketch is None
                    else {
                        "content_id": t.inputs.sketch.content_id(),
                        "width": t.inputs.sketch.width,
                        "height": t.inputs.sketch.height,
                    },
                    "base_image": None
                    if t.inputs.base_image is None
                    else t.inputs.base_image.to_dict(),
                    "seed": t.inputs.seed,
                    "strength": t.inputs.strength,
                },
            }
            for t in session.tile_list()
        ],
    }


def session_from_dict(doc: dict, resolve_sketch: SketchResolver | None = None) -> WorldSession:
    session = WorldSession(
        session_id=str(doc["session_id"]),
        canvas_width=int(doc["canvas_width"]),
        canvas_height=int(doc["canvas_height"]),
        generation_resolution=int(doc["generation_resolution"]),
        grid_gap=int(doc["grid_gap"]),
        grid_rows=int(doc["grid_rows"]),
        grid_cols=int(doc["grid_cols"]),
        blend_prompt=str(doc.get("blend_prompt", "")),
    )
    empty_snapshot = canonicalize_inputs(GenerationInputs())
    for tdoc in doc.get("tiles", []):
        idoc = tdoc["inputs"]
        sketch = None
        if idoc.get("sketch") is not None:
            sdoc = idoc["sketch"]
            if resolve_sketch is None:
                raise ModelError("session has sketch layers but no resolver was given")
            sketch = resolve_sketch(sdoc["content_id"], int(sdoc["width"]), int(sdoc["height"]))
        inputs = GenerationInputs(
            scene_prompt=str(idoc.get("scene_prompt", "")),
            regions=[RegionSpec.from_dict(r) for r in idoc.get("regions", [])],
            sketch=sketch,
            base_image=None
            if idoc.get("base_image") is None
            else ImageRef.from_dict(idoc["base_image"]),
            seed=idoc.get("seed"),
            strength=float(idoc.get("strength", DEFAULT_STRENGTH)),
        )
        tile = Tile(
            tile_id=str(tdoc["tile_id"]),
            rect=TileRect.from_dict(tdoc["rect"]),
            grid_slot=None if tdoc.get("grid_slot") is None else tuple(tdoc["grid_slot"]),
            inputs=inputs,
            tree=TileTree(empty_snapshot),
            current_image=None
            if tdoc.get("current_image") is None
            else ImageRef.from_dict(tdoc["current_image"]),
            next_region_ordinal=int(tdoc.get("next_region_ordinal", 0)),
        )
        session.tiles[tile.tile_id] = tile
    return session
