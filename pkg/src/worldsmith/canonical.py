"""Deterministic binary encoding for snapshots, digests, and content ids.

Anything that needs a stable identity (tile input states, generation
requests, image pixels) is serialized through the helpers here.  Fields are
written in a fixed order as ``tag byte + u32 length + payload``, floats are
rounded to six decimals before encoding, and absent optional fields are
skipped entirely.  Equal values therefore produce identical bytes across
processes and platforms, and digests of those bytes are safe to compare.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_U64_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a over raw bytes."""
    h = FNV64_OFFSET
    for b in data:
        h = ((h ^ b) * FNV64_PRIME) & _U64_MASK
    return h


def fnv1a64_hex(data: bytes) -> str:
    return f"{fnv1a64(data):016x}"


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class FieldWriter:
    """Accumulates tagged, length-prefixed fields in call order."""

    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def raw(self, tag: int, payload: bytes) -> None:
        self._parts.append(struct.pack(">BI", tag, len(payload)) + payload)

    def text(self, tag: int, value: str) -> None:
        self.raw(tag, value.encode("utf-8"))

    def u64(self, tag: int, value: int) -> None:
        self.raw(tag, struct.pack(">Q", value))

    def i64(self, tag: int, value: int) -> None:
        self.raw(tag, struct.pack(">q", value))

    def f64(self, tag: int, value: float) -> None:
        # fixed six-decimal precision; +0.0 collapses negative zero
        rounded = round(float(value), 6) + 0.0
        self.raw(tag, f"{rounded:.6f}".encode("ascii"))

    def nested(self, tag: int, inner: FieldWriter) -> None:
        self.raw(tag, inner.getvalue())

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class FieldReader:
    """Walks tagged fields in order; callers state which tags they expect."""

    def __init__(self, data: bytes) -> None:
        self._data = data
        self._pos = 0

    def done(self) -> bool:
        return self._pos >= len(self._data)

    def peek_tag(self) -> int | None:
        if self.done():
            return None
        return self._data[self._pos]

    def next_field(self) -> tuple[int, bytes]:
        if self._pos + 5 > len(self._data):
            raise ValueError("truncated field header")
        tag = self._data[self._pos]
        (length,) = struct.unpack_from(">I", self._data, self._pos + 1)
        start = self._pos + 5
        payload = self._data[start : start + length]
        if len(payload) != length:
            raise ValueError("truncated field payload")
        self._pos = start + length
        return tag, payload

    def expect(self, tag: int) -> bytes:
        got, payload = self.next_field()
        if got != tag:
            raise ValueError(f"expected field tag {tag}, found {got}")
        return payload

    def take(self, tag: int) -> bytes | None:
        """Consume and return the next field only if it carries this tag."""
        if self.peek_tag() != tag:
            return None
        return self.next_field()[1]


def decode_text(payload: bytes) -> str:
    return payload.decode("utf-8")


def decode_u64(payload: bytes) -> int:
    (value,) = struct.unpack(">Q", payload)
    return value


def decode_i64(payload: bytes) -> int:
    (value,) = struct.unpack(">q", payload)
    return value


def decode_f64(payload: bytes) -> float:
    return float(payload.decode("ascii"))


@dataclass(frozen=True)
class CanonicalSnapshot:
    """Canonical bytes for one encoded state plus their sha256 digest."""

    data: bytes
    digest: str


def make_snapshot(data: bytes) -> CanonicalSnapshot:
    return CanonicalSnapshot(data=data, digest=sha256_hex(data))


def image_content_id(pixels: np.ndarray) -> str:
    """Content hash of raw pixel data, independent of file encoding.

    Accepts uint8 arrays shaped (H, W) for grayscale, (H, W, 3) for RGB, or
    (H, W, 4) for RGBA.  The id covers mode, dimensions, and every byte of
    the buffer, so equal pixels always share an id.
    """
    arr = np.ascontiguousarray(pixels)
    if arr.dtype != np.uint8:
        raise ValueError("image content ids are defined over uint8 pixels")
    if arr.ndim == 2:
        mode = b"L"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        mode = b"RGB"
    elif arr.ndim == 3 and arr.shape[2] == 4:
        mode = b"RGBA"
    else:
        raise ValueError(f"unsupported image shape {arr.shape}")
    height, width = arr.shape[0], arr.shape[1]
    header = b"worldsmith-image\x00" + mode + struct.pack(">II", width, height)
    return sha256_hex(header + arr.tobytes())
