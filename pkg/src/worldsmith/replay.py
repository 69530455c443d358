"""Rebuild a session by replaying its interaction log against a live service.

Every event the engine records carries enough payload to reissue the call
that produced it.  Replaying the log into a fresh session must therefore
reproduce the same history trees and, with a deterministic backend, the
same image bytes.  Generation events replay with their recorded seeds, so
even seeds the engine drew itself come back identical.

The client can be anything with httpx's request surface (``get``, ``post``,
``patch`` returning responses with ``status_code`` and ``json()``); an
in-process test client works as well as a network one.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from .telemetry import InteractionEvent


class ReplayError(RuntimeError):
    """Replay diverged from the recorded log."""


@dataclass
class ReplayReport:
    """What a replay did: the new session and the jobs it ran."""

    session_id: str
    applied: int = 0
    job_ids: list[str] = field(default_factory=list)


def session_config_from_state(state: dict) -> dict:
    """Extract creation parameters from a session state document.

    The log replays on top of the session as it was CREATED, so this
    prefers the recorded creation parameters; the current grid gap and
    layout may have drifted since and are rebuilt by the log itself.
    """
    created = state.get("created_with") or {}
    if created:
        return dict(created)
    return {
        "canvas_width": state["canvas_width"],
        "canvas_height": state["canvas_height"],
        "tile_count": len(state["tiles"]),
        "generation_resolution": state["generation_resolution"],
        "grid_gap": state["grid_gap"],
    }


def _ok(resp, context: str) -> dict:
    if resp.status_code // 100 != 2:
        raise ReplayError(f"{context} failed with {resp.status_code}: {resp.text}")
    return resp.json()


def _as_event(item) -> InteractionEvent:
    if isinstance(item, InteractionEvent):
        return item
    return InteractionEvent.from_json(json.dumps(item))


def _poll_job(client, job_id: str, timeout: float, interval: float, pump) -> dict:
    deadline = time.monotonic() + timeout
    while True:
        if pump is not None:
            pump()
        doc = _ok(client.get(f"/api/jobs/{job_id}"), f"poll job {job_id}")
        if doc["state"] == "done":
            return doc
        if doc["state"] == "failed":
            raise ReplayError(f"job {job_id} failed during replay: {doc.get('error')}")
        if time.monotonic() >= deadline:
            raise ReplayError(f"job {job_id} did not finish within {timeout}s")
        time.sleep(interval)


def replay_session(
    client,
    events,
    *,
    session_config: dict | None = None,
    session_id: str | None = None,
    poll_timeout: float = 60.0,
    poll_interval: float = 0.005,
    pump=None,
    verify_digests: bool = True,
) -> ReplayReport:
    """Create a fresh session and apply ``events`` to it in order.

    ``pump``, when given, is called between job polls; a manual backend's
    ``run_pending`` slots in there so replays stay single-threaded.  With
    ``verify_digests`` every replayed generation must produce the same
    canonical request digest the log recorded, which pins the rebuilt
    session to the original byte for byte.
    """
    body = dict(session_config or {})
    if session_id is not None:
        body["session_id"] = session_id
    state = _ok(client.post("/api/sessions", json=body), "create session")
    sid = state["session_id"]
    version = state["version"]
    report = ReplayReport(session_id=sid)

    def patch_inputs(tile_id: str | None, **kwargs) -> None:
        nonlocal version
        doc = _ok(
            client.patch(
                f"/api/sessions/{sid}/inputs",
                json={"expected_version": version, "tile_id": tile_id, **kwargs},
            ),
            "patch inputs",
        )
        version = doc["version"]

    def refresh_version() -> None:
        nonlocal version
        version = _ok(client.get(f"/api/sessions/{sid}"), "get session")["version"]

    for item in events:
        event = _as_event(item)
        payload = event.payload
        kind = event.kind

        if kind == "modify_text":
            field_name = payload["field"]
            value = payload["value"]
            if field_name == "scene":
                patch_inputs(event.tile_id, set={"scene_prompt": value})
            elif field_name == "seed":
                if value is None:
                    patch_inputs(event.tile_id, set={"clear_seed": True})
                else:
                    patch_inputs(event.tile_id, set={"seed": value})
            elif field_name == "strength":
                patch_inputs(event.tile_id, set={"strength": value})
            elif field_name == "blend_prompt":
                patch_inputs(None, set={"blend_prompt": value})
            else:
                raise ReplayError(f"event {event.event_id}: unknown text field {field_name!r}")

        elif kind == "modify_region":
            op = {"op": payload["op"], "region_id": payload.get("region_id")}
            if payload["op"] in ("add", "update"):
                op["description"] = payload["description"]
                op["actions"] = payload["actions"]
            if payload["op"] == "add":
                del op["region_id"]
            patch_inputs(event.tile_id, regions=[op])

        elif kind == "modify_sketch":
            if "sketch_png_b64" in payload:
                if payload["sketch_png_b64"] is None:
                    patch_inputs(event.tile_id, clear_sketch=True)
                else:
                    patch_inputs(event.tile_id, sketch_png_b64=payload["sketch_png_b64"])
            elif "current_image" in payload:
                nonlocal_doc = _ok(
                    client.post(
                        f"/api/sessions/{sid}/tiles/{event.tile_id}/pick",
                        json={
                            "expected_version": version,
                            "image_id": payload["current_image"],
                        },
                    ),
                    "pick image",
                )
                version = nonlocal_doc["version"]
            else:
                raise ReplayError(f"event {event.event_id}: unrecognized sketch payload")

        elif kind == "modify_tile":
            if payload["op"] == "move_resize":
                doc = _ok(
                    client.patch(
                        f"/api/sessions/{sid}/layout",
                        json={
                            "expected_version": version,
                            "move_resize": {"tile_id": event.tile_id, "rect": payload["rect"]},
                        },
                    ),
                    "move tile",
                )
            elif payload["op"] == "grid_gap":
                doc = _ok(
                    client.patch(
                        f"/api/sessions/{sid}/layout",
                        json={"expected_version": version, "grid_gap": payload["gap"]},
                    ),
                    "set grid gap",
                )
            else:
                raise ReplayError(f"event {event.event_id}: unknown tile op {payload['op']!r}")
            version = doc["version"]

        elif kind == "run_diffusion":
            doc = _ok(
                client.post(
                    f"/api/sessions/{sid}/tiles/{event.tile_id}/generate",
                    json={
                        "expected_version": version,
                        "seed": payload["seed"],
                        "count": payload["count"],
                    },
                ),
                "generate",
            )
            report.job_ids.append(doc["job_id"])
            _poll_job(client, doc["job_id"], poll_timeout, poll_interval, pump)
            refresh_version()

        elif kind == "blend":
            doc = _ok(
                client.post(
                    f"/api/sessions/{sid}/blend",
                    json={
                        "expected_version": version,
                        "seed": payload["seed"],
                        "count": payload["count"],
                        "blur_sigma": payload["blur_sigma"],
                    },
                ),
                "blend",
            )
            report.job_ids.append(doc["job_id"])
            _poll_job(client, doc["job_id"], poll_timeout, poll_interval, pump)
            refresh_version()

        elif kind == "tree_select":
            doc = _ok(
                client.post(
                    f"/api/sessions/{sid}/tiles/{event.tile_id}/tree/select",
                    json={"expected_version": version, "node_id": payload["node_id"]},
                ),
                "tree select",
            )
            version = doc["version"]

        elif kind == "tree_add":
            doc = _ok(
                client.post(
                    f"/api/sessions/{sid}/tiles/{event.tile_id}/tree/add",
                    json={"expected_version": version, "node_id": payload["at_node_id"], "mode": payload["mode"]},
                ),
                "tree add",
            )
            if doc["node_id"] != payload["node_id"]:
                raise ReplayError(
                    f"event {event.event_id}: tree add produced {doc['node_id']}, "
                    f"log recorded {payload['node_id']}"
                )
            version = doc["version"]

        else:
            raise ReplayError(f"event {event.event_id}: unknown kind {kind!r}")

        report.applied += 1

    if verify_digests:
        _verify_digests(client, sid, [_as_event(e) for e in events])
    return report


def _verify_digests(client, sid: str, source_events: list[InteractionEvent]) -> None:
    """The replayed log must pair with the source log kind for kind, and
    every generation must carry the same canonical request digest."""
    resp = client.get(f"/api/sessions/{sid}/events")
    if resp.status_code != 200:
        raise ReplayError(f"could not read replayed events: {resp.status_code}")
    replayed = [
        InteractionEvent.from_json(line)
        for line in resp.text.splitlines()
        if line.strip()
    ]
    got_kinds = [e.kind for e in replayed]
    want_kinds = [e.kind for e in source_events]
    if got_kinds != want_kinds:
        raise ReplayError(
            f"replayed event kinds diverged: expected {want_kinds}, got {got_kinds}"
        )
    for src, dst in zip(source_events, replayed):
        if src.kind not in ("run_diffusion", "blend"):
            continue
        a = src.payload.get("request_digest")
        b = dst.payload.get("request_digest")
        if a != b:
            raise ReplayError(
                f"event {src.event_id}: request digest {b} does not match recorded {a}"
            )
