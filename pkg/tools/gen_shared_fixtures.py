"""Regenerate the cross-component fixtures under fixtures/.

Run from the repo root after changing the engine:

    python3 tools/gen_shared_fixtures.py

Three files come out, all consumed by the adapter and frontend test suites
so those packages can verify conformance without importing the engine:

* protocol.json       golden /v1 wire requests with accept/reject outcomes
* hulls.json          point sets with engine-computed snapped hulls
* session_state.json  a session state doc plus per-node editor inputs,
                      captured through the HTTP API
"""
from __future__ import annotations

import json
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from fastapi.testclient import TestClient

from worldsmith.backend import (
    DEFAULT_COUNT,
    DEFAULT_STRENGTH,
    GenerationRequest,
    MockBackend,
    RegionCondition,
    request_to_wire,
)
from worldsmith.geometry import convex_hull, snap_center
from worldsmith.service import Engine, create_app

OUT_DIR = os.path.join(os.path.dirname(__file__), "..", "fixtures")


def _checker(w: int, h: int, period: int = 8) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    plane = (((xx // period) + (yy // period)) % 2 * 255).astype(np.uint8)
    return np.stack([plane, plane // 2, 255 - plane], axis=-1)


def _disk(w: int, h: int, cx: float, cy: float, r: float) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


def _ramp(w: int, h: int) -> np.ndarray:
    return np.tile(np.linspace(0, 255, w, dtype=np.uint8), (h, 1))


def protocol_cases() -> dict:
    w, h = 48, 32
    accepts = []

    def accept(name: str, req: GenerationRequest) -> None:
        accepts.append({
            "name": name,
            "request": request_to_wire(req),
            "expect": {"accept": True, "count": req.count,
                       "width": req.width, "height": req.height},
        })

    accept("text2img_basic", GenerationRequest(
        kind="text2img", prompt="a mountain range at dusk",
        width=w, height=h, seed=11, count=2))
    accept("text2img_single_defaulted", GenerationRequest(
        kind="text2img", prompt="open sea", width=32, height=32, seed=0, count=1))
    accept("img2img_with_regions", GenerationRequest(
        kind="img2img", prompt="the same valley in winter",
        width=w, height=h, seed=7, count=2, strength=0.4,
        init_image=_checker(w, h),
        regions=[RegionCondition("a frozen lake", _disk(w, h, 14, 16, 9))]))
    accept("region_guided_two_regions", GenerationRequest(
        kind="region_guided", prompt="a coastal town",
        width=w, height=h, seed=5, count=3,
        regions=[
            RegionCondition("a red lighthouse", _disk(w, h, 36, 10, 7)),
            RegionCondition("fishing boats", _disk(w, h, 12, 24, 8)),
        ]))
    accept("blend_soft_mask", GenerationRequest(
        kind="blend", prompt="one seamless aerial view",
        width=w, height=h, seed=9, count=2,
        init_image=_checker(w, h), mask_image=_ramp(w, h)))

    base = accepts[0]["request"]
    init_b64 = accepts[2]["request"]["init_image_png_b64"]
    region_wire = accepts[3]["request"]["regions"][0]
    mask_b64 = accepts[4]["request"]["mask_png_b64"]

    def reject(name: str, **overrides) -> dict:
        doc = json.loads(json.dumps(base))
        for key, value in overrides.items():
            if value is None:
                doc.pop(key, None)
            else:
                doc[key] = value
        return {"name": name, "request": doc, "expect": {"accept": False}}

    rejects = [
        reject("unknown_kind", kind="upscale"),
        reject("width_below_minimum", width=4),
        reject("zero_count", count=0),
        reject("negative_seed", seed=-1),
        reject("seed_too_wide", seed=2 ** 63),
        reject("zero_strength", strength=0.0),
        reject("strength_above_one", strength=1.5),
        reject("missing_prompt", prompt=None),
        reject("text2img_with_init", init_image_png_b64=init_b64),
        reject("text2img_with_regions", regions=[region_wire]),
        reject("text2img_with_mask", mask_png_b64=mask_b64),
        reject("img2img_missing_init", kind="img2img"),
        reject("region_guided_missing_regions", kind="region_guided"),
        reject("blend_missing_mask", kind="blend", init_image_png_b64=init_b64),
        reject("blend_missing_init", kind="blend", mask_png_b64=mask_b64),
        reject("region_empty_text",
               kind="region_guided",
               regions=[{"text": "   ", "mask_png_b64": region_wire["mask_png_b64"]}]),
        reject("mask_not_base64", kind="blend",
               init_image_png_b64=init_b64, mask_png_b64="@@not-base64@@"),
        # payload encoded at 48x32 while the request claims 64x64
        reject("init_resolution_mismatch", kind="img2img",
               init_image_png_b64=init_b64, width=64, height=64),
    ]
    rejects.append({
        "name": "blend_with_regions",
        "request": {**json.loads(json.dumps(accepts[4]["request"])),
                    "regions": [region_wire]},
        "expect": {"accept": False},
    })
    return {
        "defaults": {"count": DEFAULT_COUNT, "strength": DEFAULT_STRENGTH},
        "accepts": accepts,
        "rejects": rejects,
    }


def hull_cases() -> list[dict]:
    rng = np.random.default_rng(613)
    cases = []

    def case(name: str, points, width: int = 64, height: int = 64) -> None:
        pts = [(float(x), float(y)) for x, y in points]
        snapped = [snap_center(p, width, height) for p in pts]
        cases.append({
            "name": name, "width": width, "height": height,
            "points": [[x, y] for x, y in pts],
            "snapped": [[x, y] for x, y in snapped],
            "hull": [[x, y] for x, y in convex_hull(snapped)],
        })

    case("empty", [])
    case("single_point", [(10.2, 11.9)])
    case("duplicates_collapse", [(5.4, 5.6), (5.9, 5.1), (5.0, 5.0)])
    case("two_points", [(3.7, 40.2), (50.1, 8.8)])
    case("collinear_diagonal", [(i + 0.3, i + 0.7) for i in range(6)])
    case("square_with_interior", [(4, 4), (40, 4), (40, 40), (4, 40), (22, 22)])
    case("edge_midpoints_dropped",
         [(0, 0), (20, 0), (40, 0), (40, 40), (0, 40), (0, 20)])
    case("clamped_outside", [(-9.5, 12.0), (80.0, -3.0), (70.5, 99.0), (-2.0, 70.0)])
    for i, size in enumerate((3, 4, 5, 8, 13, 21, 40, 60)):
        pts = rng.uniform(-4.0, 68.0, size=(size, 2))
        case(f"random_{i}_n{size}", pts)
    for i, size in enumerate((6, 12, 25)):
        pts = rng.integers(0, 16, size=(size, 2)).astype(float) * 4.0 + 0.25
        case(f"clustered_{i}_n{size}", pts, width=72, height=56)
    return cases


def capture_session_state() -> dict:
    backend = MockBackend(auto_run=False)
    engine = Engine("/tmp/fixture-capture-data", backend=backend, batch_count=2)
    client = TestClient(create_app(engine))

    def ok(resp, want=200):
        assert resp.status_code == want, resp.text
        return resp.json()

    def run_job(job_id: str) -> dict:
        backend.run_pending()
        doc = ok(client.get(f"/api/jobs/{job_id}"))
        assert doc["state"] == "done", doc
        return doc

    doc = ok(client.post("/api/sessions", json={
        "session_id": "fixture", "canvas_width": 128, "canvas_height": 128,
        "tile_count": 4, "generation_resolution": 32, "grid_gap": 8,
    }))
    sid, v = doc["session_id"], doc["version"]

    v = ok(client.patch(f"/api/sessions/{sid}/inputs", json={
        "expected_version": v, "tile_id": "t0",
        "set": {"scene_prompt": "an ancient harbor at dawn", "seed": 3},
    }))["version"]
    v = ok(client.patch(f"/api/sessions/{sid}/inputs", json={
        "expected_version": v, "tile_id": "t0",
        "regions": [{"op": "add", "region_id": "r0", "description": "a red lighthouse",
                     "actions": [{"brush": "lasso",
                                  "points": [[2, 2], [14, 2], [14, 14], [2, 14]]}]}],
    }))["version"]
    doc = ok(client.post(f"/api/sessions/{sid}/tiles/t0/generate",
                         json={"expected_version": v}))
    job = run_job(doc["job_id"])
    v = job["version"]
    v = ok(client.post(f"/api/sessions/{sid}/tiles/t0/pick", json={
        "expected_version": v, "image_id": job["results"][0]["image_id"],
    }))["version"]

    v = ok(client.patch(f"/api/sessions/{sid}/inputs", json={
        "expected_version": v, "tile_id": "t0",
        "set": {"scene_prompt": "the harbor in a winter storm"},
    }))["version"]
    v = ok(client.patch(f"/api/sessions/{sid}/inputs", json={
        "expected_version": v, "tile_id": "t0",
        "regions": [{"op": "add", "region_id": "r1", "description": "fishing boats",
                     "actions": [{"brush": "lasso",
                                  "points": [[18, 18], [30, 18], [30, 30], [18, 30]]}]}],
    }))["version"]
    doc = ok(client.post(f"/api/sessions/{sid}/tiles/t0/generate",
                         json={"expected_version": v}))
    job = run_job(doc["job_id"])
    v = job["version"]

    doc = ok(client.post(f"/api/sessions/{sid}/tiles/t0/tree/add",
                         json={"expected_version": v, "node_id": "n2", "mode": "blank"}))
    v = doc["version"]

    state = ok(client.get(f"/api/sessions/{sid}"))
    t0 = next(t for t in state["tiles"] if t["tile_id"] == "t0")
    node_inputs = {}
    for node in t0["tree"]["nodes"]:
        doc = ok(client.post(f"/api/sessions/{sid}/tiles/t0/tree/select",
                             json={"expected_version": v, "node_id": node["node_id"]}))
        v = doc["version"]
        node_inputs[node["node_id"]] = doc["inputs"]
    return {"tile_id": "t0", "state": state, "node_inputs": node_inputs}


def main() -> None:
    os.makedirs(OUT_DIR, exist_ok=True)
    outputs = {
        "protocol.json": protocol_cases(),
        "hulls.json": hull_cases(),
        "session_state.json": capture_session_state(),
    }
    for name, payload in outputs.items():
        path = os.path.join(OUT_DIR, name)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.write("\n")
        print(f"wrote {os.path.relpath(path)} ({os.path.getsize(path)} bytes)")


if __name__ == "__main__":
    main()
