"""Request bodies for the session service, validated by pydantic."""
from __future__ import annotations

from pydantic import BaseModel, Field, field_validator

from .model import (
    DEFAULT_CANVAS,
    DEFAULT_GRID_GAP,
    DEFAULT_TILE_COUNT,
    BRUSHES,
)


class CreateSessionBody(BaseModel):
    session_id: str | None = Field(default=None, pattern=r"^[A-Za-z0-9_-]{1,64}$")
    canvas_width: int = Field(default=DEFAULT_CANVAS[0], ge=16, le=16384)
    canvas_height: int = Field(default=DEFAULT_CANVAS[1], ge=16, le=16384)
    tile_count: int = Field(default=DEFAULT_TILE_COUNT, ge=1, le=64)
    # None defers to the server's configured default resolution
    generation_resolution: int | None = Field(default=None, ge=8, le=2048)
    grid_gap: int = Field(default=DEFAULT_GRID_GAP, ge=0, le=512)


class RegionOp(BaseModel):
    op: str
    region_id: str | None = None
    description: str | None = None
    actions: list[dict] | None = None

    @field_validator("op")
    @classmethod
    def _known_op(cls, value: str) -> str:
        if value not in ("add", "update", "remove"):
            raise ValueError("region op must be add, update, or remove")
        return value

    @field_validator("actions")
    @classmethod
    def _known_brushes(cls, value):
        if value is not None:
            for action in value:
                if action.get("brush") not in BRUSHES:
                    raise ValueError(f"unknown brush {action.get('brush')!r}")
        return value


class InputsSetBody(BaseModel):
    scene_prompt: str | None = None
    seed: int | None = Field(default=None, ge=0, le=2**63 - 1)
    clear_seed: bool = False
    strength: float | None = Field(default=None, gt=0.0, le=1.0)
    blend_prompt: str | None = None


class InputsPatchBody(BaseModel):
    expected_version: int = Field(ge=1)
    tile_id: str | None = None
    set: InputsSetBody | None = None
    regions: list[RegionOp] | None = None
    # RGBA PNG replacing the sketch layer; explicit null clears it
    sketch_png_b64: str | None = None
    clear_sketch: bool = False


class MoveResizeBody(BaseModel):
    tile_id: str
    rect: tuple[int, int, int, int]


class LayoutPatchBody(BaseModel):
    expected_version: int = Field(ge=1)
    move_resize: MoveResizeBody | None = None
    grid_gap: int | None = Field(default=None, ge=0, le=512)


class GenerateBody(BaseModel):
    expected_version: int = Field(ge=1)
    seed: int | None = Field(default=None, ge=0, le=2**63 - 1)
    count: int | None = Field(default=None, ge=1, le=64)


class BlendBody(BaseModel):
    expected_version: int = Field(ge=1)
    seed: int | None = Field(default=None, ge=0, le=2**63 - 1)
    count: int | None = Field(default=None, ge=1, le=64)
    blur_sigma: float | None = Field(default=None, ge=0.0, le=64.0)


class TreeSelectBody(BaseModel):
    expected_version: int = Field(ge=1)
    node_id: str


class TreeAddBody(BaseModel):
    expected_version: int = Field(ge=1)
    node_id: str
    mode: str

    @field_validator("mode")
    @classmethod
    def _known_mode(cls, value: str) -> str:
        if value not in ("copy", "blank"):
            raise ValueError("mode must be copy or blank")
        return value


class PickImageBody(BaseModel):
    expected_version: int = Field(ge=1)
    image_id: str = Field(pattern=r"^[0-9a-f]{64}$")
