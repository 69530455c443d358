"""PNG and base64 codecs for the image payloads that cross module borders.

Masks travel as 1-bit PNGs, blend planes as 8-bit grayscale, generated
images as 8-bit RGB, and sketch layers as RGBA where alpha marks painted
coverage.  Encoding is deterministic for equal pixel data.
"""
from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image


def encode_mask_png(bits: np.ndarray) -> bytes:
    """1-bit PNG from a boolean (H, W) array."""
    arr = np.asarray(bits, dtype=bool)
    if arr.ndim != 2:
        raise ValueError("mask must be a 2-D boolean array")
    height, width = arr.shape
    packed = np.packbits(arr, axis=1).tobytes()
    img = Image.frombytes("1", (width, height), packed)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def decode_mask_png(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data)).convert("L")
    return np.asarray(img) > 127


def encode_gray_png(plane: np.ndarray) -> bytes:
    arr = np.asarray(plane, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValueError("grayscale plane must be 2-D")
    img = Image.fromarray(arr, mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def decode_gray_png(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data)).convert("L")
    return np.asarray(img, dtype=np.uint8)


def encode_rgb_png(pixels: np.ndarray) -> bytes:
    arr = np.asarray(pixels, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("expected (H, W, 3) uint8 pixels")
    img = Image.fromarray(arr, mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def decode_rgb_png(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data)).convert("RGB")
    return np.asarray(img, dtype=np.uint8)


def encode_rgba_png(pixels: np.ndarray) -> bytes:
    arr = np.asarray(pixels, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 4:
        raise ValueError("expected (H, W, 4) uint8 pixels")
    img = Image.fromarray(arr, mode="RGBA")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def decode_rgba_png(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data)).convert("RGBA")
    return np.asarray(img, dtype=np.uint8)


def to_b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def from_b64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"))
