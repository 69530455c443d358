"""Base64 PNG codecs for the wire payloads.

Region masks arrive as 1-bit PNGs, blend planes as 8-bit grayscale, init
and result images as 8-bit RGB. Anything that fails to decode is a wire
error, never a crash.
"""
from __future__ import annotations

import base64
import binascii
import io

import numpy as np
from PIL import Image


class PayloadError(ValueError):
    """An image payload could not be decoded."""


def _decode(b64: str) -> Image.Image:
    try:
        raw = base64.b64decode(b64.encode("ascii"), validate=True)
        return Image.open(io.BytesIO(raw))
    except (binascii.Error, UnicodeEncodeError, OSError, AttributeError) as exc:
        raise PayloadError(f"undecodable image payload: {exc}") from exc


def mask_from_b64(b64: str) -> np.ndarray:
    """Boolean (H, W) array from a base64 PNG."""
    return np.asarray(_decode(b64).convert("L")) > 127


def gray_from_b64(b64: str) -> np.ndarray:
    """uint8 (H, W) plane from a base64 PNG."""
    return np.asarray(_decode(b64).convert("L"), dtype=np.uint8)


def rgb_from_b64(b64: str) -> np.ndarray:
    """uint8 (H, W, 3) image from a base64 PNG."""
    return np.asarray(_decode(b64).convert("RGB"), dtype=np.uint8)


def rgb_to_b64(arr: np.ndarray) -> str:
    arr = np.asarray(arr, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise PayloadError("expected (H, W, 3) uint8 pixels")
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")
