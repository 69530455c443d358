"""Session service: orchestration engine plus its HTTP facade.

The engine owns the moving parts: sessions and their working inputs, the
per-tile history trees, the interaction log, the image store, and the
generation backend.  Every mutation goes through one path per session that

1. checks the caller's optimistic-concurrency token (409 on mismatch),
2. applies the change and logs one event per changed facet,
3. bumps the session version and persists everything to disk,
4. only then replies.

A crash therefore never acknowledges state it did not keep, and two racing
writers resolve to exactly one winner.

Generation is asynchronous: submitting returns a job id, and polling the
job ingests finished results into the tile's history tree (anchored to the
node that was selected at submit time).  Picking a result as the tile's
image is an explicit, separate action.
"""
from __future__ import annotations

import logging
import os
import secrets
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.responses import FileResponse, PlainTextResponse
from PIL import Image

from . import pngio
from .backend import (
    Backend,
    BackendUnavailable,
    GenerationRequest,
    JobState,
    RegionCondition,
    RequestInvariantError,
    request_digest,
)
from .canonical import CanonicalSnapshot
from .compositor import make_blend_plan
from .masks import compose_segmentation, extract_binary_masks
from .model import (
    DEFAULT_STRENGTH,
    BrushAction,
    ModelError,
    SketchLayer,
    TileRect,
    WorldSession,
    add_region,
    canonicalize_inputs,
    create_session,
    decode_inputs,
    infer_request_kind,
    move_resize_tile,
    preview_label,
    region_mask,
    session_to_dict,
    set_grid_gap,
)
from .schemas import (
    BlendBody,
    CreateSessionBody,
    GenerateBody,
    InputsPatchBody,
    LayoutPatchBody,
    PickImageBody,
    TreeAddBody,
    TreeSelectBody,
)
from .store import ImageStore, SessionStore, StoreError, load_json, save_json
from .telemetry import EventStore
from .tree import ImageRef, TreeError

log = logging.getLogger(__name__)

DEFAULT_BATCH_COUNT = 12


class VersionConflict(Exception):
    """Caller's expected_version does not match the session."""

    def __init__(self, current: int) -> None:
        super().__init__(f"version mismatch; session is at {current}")
        self.current = current


class NotFound(KeyError):
    pass


@dataclass
class SessionRuntime:
    """One live session: state, version, log, images, and its lock."""

    session: WorldSession
    version: int
    events: EventStore
    images: ImageStore
    blends: list[dict] = field(default_factory=list)
    created_with: dict = field(default_factory=dict)
    lock: threading.RLock = field(default_factory=threading.RLock)


@dataclass
class JobRecord:
    """Engine bookkeeping for one backend submission."""

    job_id: str
    backend_job_id: str
    session_id: str
    purpose: str  # "generate" | "blend"
    request_digest: str
    seed: int
    count: int
    tile_id: str | None = None
    snapshot: CanonicalSnapshot | None = None
    label: str = ""
    anchor_id: str | None = None
    blur_sigma: float | None = None
    prompt: str = ""
    ingested: bool = False
    result_ids: list[ImageRef] = field(default_factory=list)
    error: str | None = None


class Engine:
    """Binds sessions, persistence, telemetry, and a generation backend."""

    def __init__(
        self,
        data_dir: str | os.PathLike,
        backend: Backend,
        batch_count: int = DEFAULT_BATCH_COUNT,
        blur_sigma: float | None = None,
        default_resolution: int = 512,
    ) -> None:
        if batch_count < 1:
            raise ValueError("batch count must be at least 1")
        self.store = SessionStore(data_dir)
        self.backend = backend
        self.batch_count = batch_count
        self.blur_sigma = blur_sigma  # None = derive from grid gap
        self.default_resolution = default_resolution
        self._runtimes: dict[str, SessionRuntime] = {}
        self._jobs: dict[str, JobRecord] = {}
        self._lock = threading.Lock()

    # -- session lifecycle ----------------------------------------------

    def create_session(
        self,
        session_id: str | None = None,
        canvas_size: tuple[int, int] = (1024, 1024),
        tile_count: int = 4,
        generation_resolution: int = 512,
        grid_gap: int = 32,
    ) -> SessionRuntime:
        sid = session_id or uuid.uuid4().hex[:16]
        with self._lock:
            if sid in self._runtimes or self.store.exists(sid):
                raise ModelError(f"session {sid!r} already exists")
            session = create_session(sid, canvas_size, tile_count, generation_resolution, grid_gap)
            runtime = SessionRuntime(
                session=session,
                version=1,
                events=EventStore(self._events_path(sid)),
                images=self.store.images(sid),
                created_with={
                    "canvas_width": canvas_size[0],
                    "canvas_height": canvas_size[1],
                    "tile_count": tile_count,
                    "generation_resolution": generation_resolution,
                    "grid_gap": grid_gap,
                },
            )
            self._persist(runtime)
            self._runtimes[sid] = runtime
            return runtime

    def runtime(self, session_id: str) -> SessionRuntime:
        with self._lock:
            runtime = self._runtimes.get(session_id)
            if runtime is not None:
                return runtime
            try:
                if not self.store.exists(session_id):
                    raise NotFound(f"unknown session {session_id!r}")
            except StoreError as exc:
                raise NotFound(str(exc)) from exc
            session = self.store.load(session_id)
            meta_path = os.path.join(self.store.session_dir(session_id), "meta.json")
            version, blends, created_with = 1, [], {}
            if os.path.exists(meta_path):
                meta = load_json(meta_path)
                version = int(meta.get("version", 1))
                blends = list(meta.get("blends", []))
                created_with = dict(meta.get("created_with", {}))
            runtime = SessionRuntime(
                session=session,
                version=version,
                events=EventStore(self._events_path(session_id)),
                images=self.store.images(session_id),
                blends=blends,
                created_with=created_with,
            )
            self._runtimes[session_id] = runtime
            return runtime

    def list_sessions(self) -> list[str]:
        return self.store.list_sessions()

    def _events_path(self, session_id: str) -> str:
        directory = self.store.session_dir(session_id)
        os.makedirs(directory, exist_ok=True)
        return self.store.events_path(session_id)

    def _persist(self, runtime: SessionRuntime) -> None:
        self.store.save(runtime.session)
        meta_path = os.path.join(self.store.session_dir(runtime.session.session_id), "meta.json")
        save_json(
            meta_path,
            {
                "version": runtime.version,
                "blends": runtime.blends,
                "created_with": runtime.created_with,
            },
        )

    def _begin(self, runtime: SessionRuntime, expected_version: int) -> None:
        if runtime.version != expected_version:
            raise VersionConflict(runtime.version)

    def _commit(self, runtime: SessionRuntime) -> int:
        runtime.version += 1
        self._persist(runtime)
        return runtime.version

    def _tile(self, runtime: SessionRuntime, tile_id: str | None):
        if tile_id is None:
            raise ModelError("this operation needs a tile_id")
        tile = runtime.session.tiles.get(tile_id)
        if tile is None:
            raise NotFound(f"unknown tile {tile_id!r}")
        return tile

    # -- input patching ---------------------------------------------------

    def update_inputs(
        self,
        session_id: str,
        expected_version: int,
        tile_id: str | None,
        set_fields: dict | None = None,
        region_ops: list[dict] | None = None,
        sketch_png_b64: str | None = None,
        clear_sketch: bool = False,
    ) -> int:
        """Patch working inputs; one telemetry event per changed facet."""
        runtime = self.runtime(session_id)
        with runtime.lock:
            self._begin(runtime, expected_version)
            session = runtime.session
            set_fields = set_fields or {}

            def emit(kind: str, payload: dict, event_tile: str | None = tile_id) -> None:
                runtime.events.record(session_id, kind, tile_id=event_tile, payload=payload)

            if "blend_prompt" in set_fields:
                value = str(set_fields["blend_prompt"])
                if value != session.blend_prompt:
                    session.blend_prompt = value
                    emit("modify_text", {"field": "blend_prompt", "value": value}, event_tile=None)

            tile = None
            needs_tile = bool(
                region_ops
                or sketch_png_b64 is not None
                or clear_sketch
                or set_fields.get("clear_seed")
                or any(k in set_fields for k in ("scene_prompt", "seed", "strength"))
            )
            if needs_tile:
                tile = self._tile(runtime, tile_id)

            if tile is not None:
                inputs = tile.inputs
                if "scene_prompt" in set_fields:
                    value = str(set_fields["scene_prompt"])
                    if value != inputs.scene_prompt:
                        inputs.scene_prompt = value
                        emit("modify_text", {"field": "scene", "value": value})
                if set_fields.get("clear_seed"):
                    if inputs.seed is not None:
                        inputs.seed = None
                        emit("modify_text", {"field": "seed", "value": None})
                elif set_fields.get("seed") is not None:
                    value = int(set_fields["seed"])
                    if value != inputs.seed:
                        inputs.seed = value
                        emit("modify_text", {"field": "seed", "value": value})
                if set_fields.get("strength") is not None:
                    value = float(set_fields["strength"])
                    if value != inputs.strength:
                        inputs.strength = value
                        emit("modify_text", {"field": "strength", "value": value})

                for op in region_ops or []:
                    self._apply_region_op(runtime, tile, op, emit)

                if clear_sketch:
                    if inputs.sketch is not None:
                        inputs.sketch = None
                        emit("modify_sketch", {"sketch_png_b64": None})
                elif sketch_png_b64 is not None:
                    self._apply_sketch(runtime, tile, sketch_png_b64, emit)

            return self._commit(runtime)

    def _apply_region_op(self, runtime, tile, op: dict, emit) -> None:
        kind = op.get("op")
        if kind == "add":
            actions = [BrushAction.from_dict(a) for a in op.get("actions") or []]
            region = add_region(tile, str(op.get("description", "")), actions)
            emit(
                "modify_region",
                {
                    "op": "add",
                    "region_id": region.region_id,
                    "description": region.description,
                    "color": list(region.color),
                    "actions": [a.to_dict() for a in region.actions],
                },
            )
            return
        region_id = op.get("region_id")
        matches = [r for r in tile.inputs.regions if r.region_id == region_id]
        if not matches:
            raise NotFound(f"unknown region {region_id!r}")
        region = matches[0]
        if kind == "remove":
            tile.inputs.regions.remove(region)
            emit("modify_region", {"op": "remove", "region_id": region.region_id})
            return
        changed = False
        if op.get("description") is not None and op["description"] != region.description:
            region.description = str(op["description"])
            changed = True
        if op.get("actions") is not None:
            actions = [BrushAction.from_dict(a) for a in op["actions"]]
            if [a.to_dict() for a in actions] != [a.to_dict() for a in region.actions]:
                region.actions = actions
                changed = True
        if changed:
            emit(
                "modify_region",
                {
                    "op": "update",
                    "region_id": region.region_id,
                    "description": region.description,
                    "color": list(region.color),
                    "actions": [a.to_dict() for a in region.actions],
                },
            )

    def _apply_sketch(self, runtime, tile, sketch_png_b64: str, emit) -> None:
        try:
            rgba = pngio.decode_rgba_png(pngio.from_b64(sketch_png_b64))
        except Exception as exc:
            raise ModelError(f"sketch payload is not a decodable RGBA PNG: {exc}") from exc
        layer = SketchLayer.from_rgba(rgba)
        res = runtime.session.generation_resolution
        if (layer.width, layer.height) != (res, res):
            raise ModelError(
                f"sketch must match the generation resolution {res}x{res}, "
                f"got {layer.width}x{layer.height}"
            )
        current = tile.inputs.sketch
        if current is not None and current.content_id() == layer.content_id():
            return
        runtime.images.put_rgba(layer.to_rgba())
        tile.inputs.sketch = layer
        emit("modify_sketch", {"sketch_png_b64": sketch_png_b64})

    # -- layout -----------------------------------------------------------

    def update_layout(
        self,
        session_id: str,
        expected_version: int,
        move_resize: tuple[str, tuple[int, int, int, int]] | None = None,
        grid_gap: int | None = None,
    ) -> int:
        runtime = self.runtime(session_id)
        with runtime.lock:
            self._begin(runtime, expected_version)
            session = runtime.session
            if move_resize is not None:
                tile_id, rect = move_resize
                tile = self._tile(runtime, tile_id)
                before = tile.rect.to_dict()
                move_resize_tile(session, tile_id, TileRect(*rect))
                if tile.rect.to_dict() != before:
                    runtime.events.record(
                        session_id,
                        "modify_tile",
                        tile_id=tile_id,
                        payload={"op": "move_resize", "rect": list(rect)},
                    )
            if grid_gap is not None and grid_gap != session.grid_gap:
                set_grid_gap(session, grid_gap)
                runtime.events.record(
                    session_id,
                    "modify_tile",
                    tile_id=None,
                    payload={"op": "grid_gap", "gap": grid_gap},
                )
            return self._commit(runtime)

    # -- generation -------------------------------------------------------

    def _tile_init_image(self, runtime: SessionRuntime, tile) -> np.ndarray:
        """Init plane for img2img: sketch layered over base image or white."""
        res = runtime.session.generation_resolution
        if tile.inputs.base_image is not None:
            base = runtime.images.get_rgb(tile.inputs.base_image.image_id)
            if base.shape[:2] != (res, res):
                base = np.asarray(
                    Image.fromarray(base, mode="RGB").resize((res, res), Image.Resampling.BILINEAR),
                    dtype=np.uint8,
                )
        else:
            base = np.full((res, res, 3), 255, dtype=np.uint8)
        sketch = tile.inputs.sketch
        if sketch is not None:
            base = np.where(sketch.coverage[:, :, None], sketch.image, base)
        return np.ascontiguousarray(base)

    def _tile_regions(self, runtime: SessionRuntime, tile) -> list[RegionCondition]:
        """Disjoint request masks via the flattened segmentation map."""
        res = runtime.session.generation_resolution
        if not tile.inputs.regions:
            return []
        seg = compose_segmentation(
            [
                (r.region_id, r.color, r.description, region_mask(r, res, res))
                for r in tile.inputs.regions
            ],
            res,
            res,
        )
        out = []
        for region_id, description, mask in extract_binary_masks(seg):
            if mask.count() > 0:
                out.append(RegionCondition(text=description, mask=mask.bits))
        return out

    def generate(
        self,
        session_id: str,
        tile_id: str,
        expected_version: int,
        seed: int | None = None,
        count: int | None = None,
    ) -> tuple[str, int]:
        """Submit the tile's working inputs to the backend; returns job id."""
        runtime = self.runtime(session_id)
        with runtime.lock:
            self._begin(runtime, expected_version)
            session = runtime.session
            tile = self._tile(runtime, tile_id)
            inputs = tile.inputs
            kind = infer_request_kind(inputs)
            effective_seed = seed
            if effective_seed is None:
                effective_seed = inputs.seed
            if effective_seed is None:
                effective_seed = secrets.randbits(63)
            effective_count = count or self.batch_count
            res = session.generation_resolution

            regions = self._tile_regions(runtime, tile)
            request = GenerationRequest(
                kind=kind,
                prompt=inputs.scene_prompt,
                width=res,
                height=res,
                seed=effective_seed,
                count=effective_count,
                strength=inputs.strength,
                regions=regions if kind in ("img2img", "region_guided") else [],
                init_image=self._tile_init_image(runtime, tile) if kind == "img2img" else None,
            )
            backend_job_id = self.backend.submit(request)
            job = JobRecord(
                job_id=uuid.uuid4().hex,
                backend_job_id=backend_job_id,
                session_id=session_id,
                purpose="generate",
                request_digest=request_digest(request),
                seed=effective_seed,
                count=effective_count,
                tile_id=tile_id,
                snapshot=canonicalize_inputs(inputs),
                label=preview_label(inputs),
                anchor_id=tile.tree.selected_id,
            )
            with self._lock:
                self._jobs[job.job_id] = job
            runtime.events.record(
                session_id,
                "run_diffusion",
                tile_id=tile_id,
                payload={
                    "job_id": job.job_id,
                    "request_digest": job.request_digest,
                    "kind": kind,
                    "seed": effective_seed,
                    "count": effective_count,
                },
            )
            return job.job_id, self._commit(runtime)

    def blend(
        self,
        session_id: str,
        expected_version: int,
        seed: int | None = None,
        count: int | None = None,
        blur_sigma: float | None = None,
    ) -> tuple[str, int]:
        """Blend every tile's image into one canvas-level request."""
        runtime = self.runtime(session_id)
        with runtime.lock:
            self._begin(runtime, expected_version)
            session = runtime.session
            layers = []
            for tile in session.tile_list():
                if tile.current_image is None:
                    raise ModelError(f"tile {tile.tile_id!r} has no image to blend")
                layers.append(
                    (tile.rect.as_tuple(), runtime.images.get_rgb(tile.current_image.image_id))
                )
            res = session.generation_resolution
            sigma = blur_sigma if blur_sigma is not None else self.blur_sigma
            plan = make_blend_plan(
                (session.canvas_width, session.canvas_height),
                layers,
                session.blend_prompt,
                session.grid_gap,
                (res, res),
                blur_sigma=sigma,
            )
            effective_seed = seed if seed is not None else secrets.randbits(63)
            effective_count = count or self.batch_count
            request = GenerationRequest(
                kind="blend",
                prompt=plan.prompt,
                width=plan.width,
                height=plan.height,
                seed=effective_seed,
                count=effective_count,
                strength=DEFAULT_STRENGTH,
                init_image=plan.base_image,
                mask_image=np.rint(plan.blend_mask * 255.0).astype(np.uint8),
            )
            backend_job_id = self.backend.submit(request)
            job = JobRecord(
                job_id=uuid.uuid4().hex,
                backend_job_id=backend_job_id,
                session_id=session_id,
                purpose="blend",
                request_digest=request_digest(request),
                seed=effective_seed,
                count=effective_count,
                blur_sigma=plan.blur_sigma,
                prompt=plan.prompt,
            )
            with self._lock:
                self._jobs[job.job_id] = job
            runtime.events.record(
                session_id,
                "blend",
                tile_id=None,
                payload={
                    "job_id": job.job_id,
                    "request_digest": job.request_digest,
                    "seed": effective_seed,
                    "count": effective_count,
                    # the caller-facing parameter, pre letterbox scaling, so a
                    # replayed call takes the same path (None = derived)
                    "blur_sigma": sigma,
                    "prompt": plan.prompt,
                },
            )
            return job.job_id, self._commit(runtime)

    # -- job polling ------------------------------------------------------

    def poll_job(self, job_id: str) -> dict:
        """Backend status, ingesting finished results exactly once."""
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise NotFound(f"unknown job {job_id!r}")
        runtime = self.runtime(job.session_id)
        backend_job = self.backend.poll(job.backend_job_id)
        with runtime.lock:
            if backend_job.state == JobState.DONE and not job.ingested:
                self._ingest(runtime, job, backend_job.results)
            if backend_job.state == JobState.FAILED and not job.ingested:
                job.error = backend_job.error
                job.ingested = True
            doc = {
                "job_id": job.job_id,
                "session_id": job.session_id,
                "tile_id": job.tile_id,
                "purpose": job.purpose,
                "state": backend_job.state.value,
                "request_digest": job.request_digest,
                "seed": job.seed,
                "version": runtime.version,
            }
            if job.result_ids:
                doc["results"] = [ref.to_dict() for ref in job.result_ids]
            if job.error is not None:
                doc["error"] = job.error
            return doc

    def _ingest(self, runtime: SessionRuntime, job: JobRecord, results: list[ImageRef]) -> None:
        refs = []
        for ref in results:
            arr = self.backend.fetch_image(ref.image_id)
            refs.append(runtime.images.put_rgb(arr))
        if job.purpose == "generate":
            tile = runtime.session.tiles.get(job.tile_id)
            if tile is None:
                raise StoreError(f"job {job.job_id!r} references a missing tile")
            tile.tree.record_generation(
                job.snapshot, refs, seed=job.seed, label=job.label, anchor_id=job.anchor_id
            )
        else:
            runtime.blends.append(
                {
                    "blend_id": job.job_id,
                    "prompt": job.prompt,
                    "seed": job.seed,
                    "blur_sigma": job.blur_sigma,
                    "request_digest": job.request_digest,
                    "images": [ref.to_dict() for ref in refs],
                    "created_at": int(time.time() * 1000),
                }
            )
        job.result_ids = refs
        job.ingested = True
        self._commit(runtime)

    # -- tree operations ----------------------------------------------------

    def _hydrate_from_node(self, runtime: SessionRuntime, tile, node) -> None:
        def resolver(content_id: str, width: int, height: int) -> SketchLayer:
            layer = SketchLayer.from_rgba(runtime.images.get_rgba(content_id))
            if (layer.width, layer.height) != (width, height):
                raise StoreError(f"sketch {content_id!r} has unexpected dimensions")
            return layer

        tile.inputs = decode_inputs(node.snapshot.data, resolver)
        tile.current_image = node.results[-1] if node.results else None

    def tree_select(
        self, session_id: str, tile_id: str, expected_version: int, node_id: str
    ) -> tuple[dict, int]:
        runtime = self.runtime(session_id)
        with runtime.lock:
            self._begin(runtime, expected_version)
            tile = self._tile(runtime, tile_id)
            node = tile.tree.select(node_id)
            self._hydrate_from_node(runtime, tile, node)
            runtime.events.record(
                session_id, "tree_select", tile_id=tile_id, payload={"node_id": node_id}
            )
            version = self._commit(runtime)
            return tile_inputs_doc(tile), version

    def tree_add(
        self, session_id: str, tile_id: str, expected_version: int, node_id: str, mode: str
    ) -> tuple[str, int]:
        runtime = self.runtime(session_id)
        with runtime.lock:
            self._begin(runtime, expected_version)
            tile = self._tile(runtime, tile_id)
            new_id = tile.tree.add_manual(node_id, mode)
            self._hydrate_from_node(runtime, tile, tile.tree.node(new_id))
            runtime.events.record(
                session_id,
                "tree_add",
                tile_id=tile_id,
                payload={"at_node_id": node_id, "mode": mode, "node_id": new_id},
            )
            version = self._commit(runtime)
            return new_id, version

    def pick_image(
        self, session_id: str, tile_id: str, expected_version: int, image_id: str
    ) -> int:
        """Make a generated result the tile's working image (img2img base)."""
        runtime = self.runtime(session_id)
        with runtime.lock:
            self._begin(runtime, expected_version)
            tile = self._tile(runtime, tile_id)
            try:
                arr = runtime.images.get_rgb(image_id)
            except KeyError:
                raise NotFound(f"unknown image {image_id!r}")
            ref = ImageRef(image_id, arr.shape[1], arr.shape[0])
            tile.current_image = ref
            tile.inputs.base_image = ref
            runtime.events.record(
                session_id,
                "modify_sketch",
                tile_id=tile_id,
                payload={"current_image": image_id, "width": ref.width, "height": ref.height},
            )
            return self._commit(runtime)


# -- state documents --------------------------------------------------------


def tile_inputs_doc(tile) -> dict:
    inputs = tile.inputs
    return {
        "tile_id": tile.tile_id,
        "scene_prompt": inputs.scene_prompt,
        "seed": inputs.seed,
        "strength": inputs.strength,
        "regions": [r.to_dict() for r in inputs.regions],
        "sketch": None
        if inputs.sketch is None
        else {
            "content_id": inputs.sketch.content_id(),
            "width": inputs.sketch.width,
            "height": inputs.sketch.height,
        },
        "base_image": None if inputs.base_image is None else inputs.base_image.to_dict(),
        "current_image": None if tile.current_image is None else tile.current_image.to_dict(),
    }


def tree_doc(tile) -> dict:
    return {
        "selected_id": tile.tree.selected_id,
        "root_id": tile.tree.root_id,
        "nodes": [
            {
                "node_id": n.node_id,
                "parent_id": n.parent_id,
                "label": n.label,
                "created_at": n.created_at,
                "digest": n.snapshot.digest,
                "results": [r.to_dict() for r in n.results],
                "seeds": list(n.seeds),
                "children": list(n.children),
            }
            for n in tile.tree.walk()
        ],
    }


def session_state_doc(runtime: SessionRuntime) -> dict:
    doc = session_to_dict(runtime.session)
    doc["version"] = runtime.version
    doc["blends"] = list(runtime.blends)
    doc["created_with"] = dict(runtime.created_with)
    for tdoc in doc["tiles"]:
        tile = runtime.session.tiles[tdoc["tile_id"]]
        tdoc["tree"] = tree_doc(tile)
    return doc


# -- HTTP facade --------------------------------------------------------------


def create_app(engine: Engine):
    app = FastAPI(title="worldsmith", docs_url=None, redoc_url=None)
    app.state.engine = engine

    def _http(exc: Exception):
        if isinstance(exc, VersionConflict):
            return HTTPException(
                status_code=409, detail={"message": str(exc), "current_version": exc.current}
            )
        if isinstance(exc, NotFound):
            return HTTPException(status_code=404, detail=str(exc.args[0]))
        if isinstance(exc, (ModelError, TreeError, RequestInvariantError)):
            return HTTPException(status_code=422, detail=str(exc))
        raise exc

    @app.post("/api/sessions")
    def http_create_session(body: CreateSessionBody) -> dict:
        try:
            runtime = engine.create_session(
                session_id=body.session_id,
                canvas_size=(body.canvas_width, body.canvas_height),
                tile_count=body.tile_count,
                generation_resolution=body.generation_resolution or engine.default_resolution,
                grid_gap=body.grid_gap,
            )
        except Exception as exc:
            raise _http(exc)
        with runtime.lock:
            return session_state_doc(runtime)

    @app.get("/api/sessions")
    def http_list_sessions() -> dict:
        return {"sessions": engine.list_sessions()}

    @app.get("/api/sessions/{session_id}")
    def http_get_session(session_id: str) -> dict:
        try:
            runtime = engine.runtime(session_id)
        except Exception as exc:
            raise _http(exc)
        with runtime.lock:
            return session_state_doc(runtime)

    @app.patch("/api/sessions/{session_id}/inputs")
    def http_update_inputs(session_id: str, body: InputsPatchBody) -> dict:
        try:
            version = engine.update_inputs(
                session_id,
                body.expected_version,
                body.tile_id,
                set_fields=None if body.set is None else body.set.model_dump(exclude_none=True),
                region_ops=None
                if body.regions is None
                else [op.model_dump(exclude_none=True) for op in body.regions],
                sketch_png_b64=body.sketch_png_b64,
                clear_sketch=body.clear_sketch,
            )
        except Exception as exc:
            raise _http(exc)
        return {"version": version}

    @app.patch("/api/sessions/{session_id}/layout")
    def http_update_layout(session_id: str, body: LayoutPatchBody) -> dict:
        try:
            version = engine.update_layout(
                session_id,
                body.expected_version,
                move_resize=None
                if body.move_resize is None
                else (body.move_resize.tile_id, body.move_resize.rect),
                grid_gap=body.grid_gap,
            )
        except Exception as exc:
            raise _http(exc)
        return {"version": version}

    @app.post("/api/sessions/{session_id}/tiles/{tile_id}/generate")
    def http_generate(session_id: str, tile_id: str, body: GenerateBody) -> dict:
        try:
            job_id, version = engine.generate(
                session_id, tile_id, body.expected_version, seed=body.seed, count=body.count
            )
        except Exception as exc:
            raise _http(exc)
        return {"job_id": job_id, "version": version}

    @app.post("/api/sessions/{session_id}/blend")
    def http_blend(session_id: str, body: BlendBody) -> dict:
        try:
            job_id, version = engine.blend(
                session_id,
                body.expected_version,
                seed=body.seed,
                count=body.count,
                blur_sigma=body.blur_sigma,
            )
        except ModelError as exc:
            # a tile without an image is a state conflict, not a bad request
            raise HTTPException(status_code=409, detail=str(exc))
        except Exception as exc:
            raise _http(exc)
        return {"job_id": job_id, "version": version}

    @app.get("/api/jobs/{job_id}")
    def http_job(job_id: str) -> dict:
        try:
            return engine.poll_job(job_id)
        except Exception as exc:
            raise _http(exc)

    @app.post("/api/sessions/{session_id}/tiles/{tile_id}/tree/select")
    def http_tree_select(session_id: str, tile_id: str, body: TreeSelectBody) -> dict:
        try:
            inputs, version = engine.tree_select(
                session_id, tile_id, body.expected_version, body.node_id
            )
        except Exception as exc:
            raise _http(exc)
        return {"version": version, "inputs": inputs}

    @app.post("/api/sessions/{session_id}/tiles/{tile_id}/tree/add")
    def http_tree_add(session_id: str, tile_id: str, body: TreeAddBody) -> dict:
        try:
            node_id, version = engine.tree_add(
                session_id, tile_id, body.expected_version, body.node_id, body.mode
            )
        except Exception as exc:
            raise _http(exc)
        return {"version": version, "node_id": node_id}

    @app.post("/api/sessions/{session_id}/tiles/{tile_id}/pick")
    def http_pick(session_id: str, tile_id: str, body: PickImageBody) -> dict:
        try:
            version = engine.pick_image(
                session_id, tile_id, body.expected_version, body.image_id
            )
        except Exception as exc:
            raise _http(exc)
        return {"version": version}

    @app.get("/api/sessions/{session_id}/events")
    def http_events(session_id: str) -> PlainTextResponse:
        try:
            runtime = engine.runtime(session_id)
        except Exception as exc:
            raise _http(exc)
        with open(runtime.events.path, "rb") as fh:
            data = fh.read()
        return PlainTextResponse(content=data, media_type="application/x-ndjson")

    @app.get("/api/sessions/{session_id}/images/{image_id}")
    def http_image(
        session_id: str, image_id: str, size: int | None = Query(default=None, ge=16, le=1024)
    ):
        try:
            runtime = engine.runtime(session_id)
            path = runtime.images.png_path(image_id)
        except NotFound as exc:
            raise _http(exc)
        except (KeyError, StoreError):
            # malformed ids 404 like missing ones; the id namespace is opaque
            raise HTTPException(status_code=404, detail=f"unknown image {image_id!r}")
        headers = {"Cache-Control": "public, max-age=31536000, immutable"}
        if size is None:
            return FileResponse(path, media_type="image/png", headers=headers)
        arr = runtime.images.get_rgb(image_id)
        h, w = arr.shape[:2]
        scale = min(size / w, size / h, 1.0)
        tw, th = max(1, round(w * scale)), max(1, round(h * scale))
        thumb = Image.fromarray(arr, mode="RGB").resize((tw, th), Image.Resampling.BILINEAR)
        return Response(
            content=pngio.encode_rgb_png(np.asarray(thumb, dtype=np.uint8)),
            media_type="image/png",
            headers=headers,
        )

    @app.get("/api/health")
    def http_health() -> dict:
        # health must answer even when the generation backend is down
        try:
            desc = engine.backend.descriptor()
            status = "ok"
            backend: dict = {
                "name": desc.name,
                "kinds": list(desc.kinds),
                "max_resolution": desc.max_resolution,
            }
        except BackendUnavailable as exc:
            status = "degraded"
            backend = {"error": str(exc)}
        return {
            "status": status,
            "backend": backend,
            "batch_count": engine.batch_count,
            "sessions": len(engine.list_sessions()),
        }

    return app
