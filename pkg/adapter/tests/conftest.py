"""Shared builders for wire payloads."""
from __future__ import annotations

import base64
import io
import time

import numpy as np
from PIL import Image


def png_b64(arr: np.ndarray, mode: str) -> str:
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def rgb_b64(width: int, height: int, value: int = 40) -> str:
    arr = np.full((height, width, 3), value, dtype=np.uint8)
    return png_b64(arr, "RGB")


def gray_b64(width: int, height: int, plane: np.ndarray | None = None) -> str:
    if plane is None:
        plane = np.zeros((height, width), dtype=np.uint8)
        plane[:, width // 2:] = 255
    return png_b64(plane, "L")


def mask_b64(width: int, height: int, on: np.ndarray | None = None) -> str:
    if on is None:
        on = np.zeros((height, width), dtype=bool)
        on[height // 4: 3 * height // 4, width // 4: 3 * width // 4] = True
    # PIL misreads bool arrays handed to mode "1"; go through 8-bit gray
    img = Image.fromarray(on.astype(np.uint8) * 255, mode="L").convert("1")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decoded_rgb(b64: str) -> np.ndarray:
    img = Image.open(io.BytesIO(base64.b64decode(b64)))
    return np.asarray(img.convert("RGB"), dtype=np.uint8)


def poll_done(client, job_id: str, timeout: float = 30.0) -> dict:
    """Poll a /v1 job until it leaves the queue, failing on timeout."""
    deadline = time.time() + timeout
    while time.time() < deadline:
        resp = client.get(f"/v1/jobs/{job_id}")
        assert resp.status_code == 200, resp.text
        doc = resp.json()
        if doc["state"] in ("done", "failed"):
            return doc
        time.sleep(0.01)
    raise AssertionError(f"job {job_id} still pending after {timeout}s")
