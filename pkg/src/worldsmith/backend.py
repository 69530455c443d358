"""Generation backends: request contract, wire protocol, mock, HTTP client.

Four request kinds cover everything the engine asks of an image generator:

* ``text2img``: prompt only, images from scratch
* ``img2img``: rework an init image at a given strength; painted region
  conditions may ride along
* ``region_guided``: one binary mask plus description per region, no init
* ``blend``: rework an init image only where a grayscale mask allows

Requests travel as JSON with base64 PNGs (masks 1-bit, init RGB, blend
plane 8-bit gray) over three endpoints: ``POST /v1/generate``,
``GET /v1/jobs/{id}``, ``GET /v1/health``.  Jobs move strictly
queued -> running -> done or failed.

The bundled mock backend is fully deterministic: images are procedural
value noise keyed by the request's canonical digest, so equal requests
yield byte-identical PNGs in any process, which makes recorded sessions
replayable without a GPU in sight.
"""
from __future__ import annotations

import logging
import queue
import struct
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Protocol

import numpy as np

from . import pngio
from .canonical import FieldWriter, fnv1a64, fnv1a64_hex, image_content_id
from .tree import ImageRef

log = logging.getLogger(__name__)

KINDS = ("text2img", "img2img", "region_guided", "blend")

DEFAULT_COUNT = 12
DEFAULT_STRENGTH = 0.65
MAX_SEED = 2**63 - 1


class RequestInvariantError(ValueError):
    """A generation request broke one of the kind contracts."""


class BackendUnavailable(RuntimeError):
    """The backend cannot be reached or refused the connection."""


class JobState(str, Enum):
    QUEUED = "queued"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


_ALLOWED_TRANSITIONS = {
    JobState.QUEUED: {JobState.RUNNING},
    JobState.RUNNING: {JobState.DONE, JobState.FAILED},
    JobState.DONE: set(),
    JobState.FAILED: set(),
}


@dataclass
class RegionCondition:
    """One region's guidance: what to draw and where."""

    text: str
    mask: np.ndarray  # bool (H, W)

    def __post_init__(self) -> None:
        self.mask = np.asarray(self.mask, dtype=bool)


@dataclass
class GenerationRequest:
    kind: str
    prompt: str
    width: int
    height: int
    seed: int
    count: int = DEFAULT_COUNT
    strength: float = DEFAULT_STRENGTH
    regions: list[RegionCondition] = field(default_factory=list)
    init_image: np.ndarray | None = None  # uint8 (H, W, 3)
    mask_image: np.ndarray | None = None  # uint8 (H, W)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GenerationRequest):
            return NotImplemented
        return canonical_request_bytes(self) == canonical_request_bytes(other)


def validate_request(req: GenerationRequest) -> None:
    """Enforce the per-kind contracts; error messages name the invariant."""
    if req.kind not in KINDS:
        raise RequestInvariantError(f"unknown request kind {req.kind!r}")
    if req.width < 8 or req.height < 8:
        raise RequestInvariantError("resolution must be at least 8x8")
    if req.count < 1:
        raise RequestInvariantError("count must be at least 1")
    if not (0 <= req.seed <= MAX_SEED):
        raise RequestInvariantError("seed must fit in 63 bits")
    if not (0.0 < req.strength <= 1.0):
        raise RequestInvariantError("strength must be in (0, 1]")

    has_init = req.init_image is not None
    has_mask = req.mask_image is not None
    has_regions = bool(req.regions)
    if req.kind == "text2img" and (has_init or has_mask or has_regions):
        raise RequestInvariantError("text2img takes a prompt only")
    if req.kind == "img2img":
        if not has_init:
            raise RequestInvariantError("img2img requires an init image")
        if has_mask:
            raise RequestInvariantError("img2img does not take a blend mask")
    if req.kind == "region_guided":
        if not has_regions:
            raise RequestInvariantError("region_guided requires at least one region")
        if has_init or has_mask:
            raise RequestInvariantError("region_guided takes regions only")
    if req.kind == "blend":
        if not (has_init and has_mask):
            raise RequestInvariantError("blend requires both init image and mask")
        if has_regions:
            raise RequestInvariantError("blend does not take regions")

    shape = (req.height, req.width)
    if has_init:
        arr = np.asarray(req.init_image)
        if arr.dtype != np.uint8 or arr.shape != (*shape, 3):
            raise RequestInvariantError("init image must be uint8 RGB at request resolution")
    if has_mask:
        arr = np.asarray(req.mask_image)
        if arr.dtype != np.uint8 or arr.shape != shape:
            raise RequestInvariantError("blend mask must be uint8 gray at request resolution")
    for region in req.regions:
        if not region.text.strip():
            raise RequestInvariantError("region conditions need a description")
        if region.mask.shape != shape:
            raise RequestInvariantError("region masks must match request resolution")


# canonical field tags for requests
_TAG_KIND = 1
_TAG_PROMPT = 2
_TAG_WIDTH = 3
_TAG_HEIGHT = 4
_TAG_SEED = 5
_TAG_COUNT = 6
_TAG_STRENGTH = 7
_TAG_REGIONS = 8
_TAG_REGION = 9
_TAG_REGION_TEXT = 10
_TAG_REGION_MASK = 11
_TAG_INIT = 12
_TAG_MASK = 13


def canonical_request_bytes(req: GenerationRequest) -> bytes:
    """Stable byte encoding; image payloads enter by content id."""
    w = FieldWriter()
    w.text(_TAG_KIND, req.kind)
    w.text(_TAG_PROMPT, req.prompt)
    w.u64(_TAG_WIDTH, req.width)
    w.u64(_TAG_HEIGHT, req.height)
    w.u64(_TAG_SEED, req.seed)
    w.u64(_TAG_COUNT, req.count)
    w.f64(_TAG_STRENGTH, req.strength)
    regions = FieldWriter()
    for region in req.regions:
        r = FieldWriter()
        r.text(_TAG_REGION_TEXT, region.text)
        r.text(_TAG_REGION_MASK, image_content_id(region.mask.astype(np.uint8) * 255))
        regions.nested(_TAG_REGION, r)
    w.nested(_TAG_REGIONS, regions)
    if req.init_image is not None:
        w.text(_TAG_INIT, image_content_id(np.asarray(req.init_image)))
    if req.mask_image is not None:
        w.text(_TAG_MASK, image_content_id(np.asarray(req.mask_image)))
    return w.getvalue()


def request_digest(req: GenerationRequest) -> str:
    return fnv1a64_hex(canonical_request_bytes(req))


def request_to_wire(req: GenerationRequest) -> dict:
    """JSON-ready request document with base64 PNG payloads."""
    doc: dict = {
        "kind": req.kind,
        "prompt": req.prompt,
        "width": req.width,
        "height": req.height,
        "seed": req.seed,
        "count": req.count,
        "strength": req.strength,
        "regions": [
            {"text": r.text, "mask_png_b64": pngio.to_b64(pngio.encode_mask_png(r.mask))}
            for r in req.regions
        ],
    }
    if req.init_image is not None:
        doc["init_image_png_b64"] = pngio.to_b64(pngio.encode_rgb_png(req.init_image))
    if req.mask_image is not None:
        doc["mask_png_b64"] = pngio.to_b64(pngio.encode_gray_png(req.mask_image))
    return doc


def request_from_wire(doc: dict) -> GenerationRequest:
    """Decode and validate a wire document."""
    try:
        regions = [
            RegionCondition(
                text=str(r["text"]),
                mask=pngio.decode_mask_png(pngio.from_b64(r["mask_png_b64"])),
            )
            for r in doc.get("regions", [])
        ]
        req = GenerationRequest(
            kind=str(doc["kind"]),
            prompt=str(doc["prompt"]),
            width=int(doc["width"]),
            height=int(doc["height"]),
            seed=int(doc["seed"]),
            count=int(doc.get("count", DEFAULT_COUNT)),
            strength=float(doc.get("strength", DEFAULT_STRENGTH)),
            regions=regions,
            init_image=None
            if doc.get("init_image_png_b64") is None
            else pngio.decode_rgb_png(pngio.from_b64(doc["init_image_png_b64"])),
            mask_image=None
            if doc.get("mask_png_b64") is None
            else pngio.decode_gray_png(pngio.from_b64(doc["mask_png_b64"])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, RequestInvariantError):
            raise
        raise RequestInvariantError(f"malformed request document: {exc}") from exc
    validate_request(req)
    return req


@dataclass
class GenerationJob:
    """Engine-side view of one submitted request."""

    job_id: str
    request_digest: str
    state: JobState
    results: list[ImageRef] = field(default_factory=list)
    error: str | None = None
    created_at: float = 0.0
    started_at: float | None = None
    finished_at: float | None = None


@dataclass(frozen=True)
class BackendDescriptor:
    name: str
    kinds: tuple[str, ...]
    max_resolution: int
    endpoint: str | None = None


class Backend(Protocol):
    """What the engine requires of any image generator."""

    def submit(self, request: GenerationRequest) -> str: ...

    def poll(self, job_id: str) -> GenerationJob: ...

    def fetch_image(self, image_id: str) -> np.ndarray: ...

    def descriptor(self) -> BackendDescriptor: ...


# --- deterministic mock ----------------------------------------------------

_NOISE_CELL = 16


def _hash_u64(*parts: int) -> int:
    return fnv1a64(struct.pack(f">{len(parts)}Q", *(p & 0xFFFFFFFFFFFFFFFF for p in parts)))


def _value_noise(width: int, height: int, key: int) -> np.ndarray:
    """Smooth procedural RGB texture from an integer-hashed lattice."""
    gx = width // _NOISE_CELL + 2
    gy = height // _NOISE_CELL + 2
    lattice = np.empty((gy, gx, 3), dtype=np.float64)
    for iy in range(gy):
        for ix in range(gx):
            for c in range(3):
                lattice[iy, ix, c] = _hash_u64(key, ix, iy, c) & 0xFF
    xs = np.arange(width, dtype=np.float64) / _NOISE_CELL
    ys = np.arange(height, dtype=np.float64) / _NOISE_CELL
    x0 = xs.astype(np.int64)
    y0 = ys.astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    fx = fx * fx * (3.0 - 2.0 * fx)
    fy = fy * fy * (3.0 - 2.0 * fy)
    fx = fx[None, :, None]
    fy = fy[:, None, None]
    c00 = lattice[y0][:, x0]
    c10 = lattice[y0][:, x0 + 1]
    c01 = lattice[y0 + 1][:, x0]
    c11 = lattice[y0 + 1][:, x0 + 1]
    top = c00 * (1.0 - fx) + c10 * fx
    bottom = c01 * (1.0 - fx) + c11 * fx
    return np.rint(top * (1.0 - fy) + bottom * fy).astype(np.uint8)


def mock_texture(req: GenerationRequest, index: int) -> np.ndarray:
    """The procedural base image the mock derives result ``index`` from."""
    digest = fnv1a64(canonical_request_bytes(req))
    key = _hash_u64(digest, index)
    return _value_noise(req.width, req.height, key)


def region_fill_color(text: str) -> tuple[int, int, int]:
    """Flat color a region condition paints in mock output."""
    h = fnv1a64(text.encode("utf-8"))
    color = ((h >> 16) & 0xFF, (h >> 8) & 0xFF, h & 0xFF)
    if color == (0, 0, 0):
        color = (1, 1, 1)
    return color


def mock_generate(req: GenerationRequest) -> list[np.ndarray]:
    """Deterministic stand-in for a real generator.

    text2img returns the texture; img2img mixes init and texture by
    strength; region conditions paint their pixels in a color hashed from
    the description; blend reworks the init only where the mask allows, so
    an all-zero mask returns the init untouched.
    """
    validate_request(req)
    out: list[np.ndarray] = []
    for index in range(req.count):
        texture = mock_texture(req, index).astype(np.float64)
        if req.kind == "text2img" or req.kind == "region_guided":
            image = texture
        elif req.kind == "img2img":
            init = np.asarray(req.init_image, dtype=np.float64)
            image = (1.0 - req.strength) * init + req.strength * texture
        else:  # blend
            init = np.asarray(req.init_image, dtype=np.float64)
            m = (np.asarray(req.mask_image, dtype=np.float64) / 255.0)[:, :, None]
            image = init * (1.0 - m) + texture * m
        image = np.rint(image).astype(np.uint8)
        for region in req.regions:
            image[region.mask] = region_fill_color(region.text)
        out.append(image)
    return out


class MockBackend:
    """In-process backend used for tests, offline work, and replays.

    Jobs run on a worker thread by default; construct with auto_run False
    and call run_pending to step jobs by hand when a test needs to observe
    the queued state.
    """

    def __init__(self, auto_run: bool = True) -> None:
        self._auto_run = auto_run
        self._jobs: dict[str, GenerationJob] = {}
        self._requests: dict[str, GenerationRequest] = {}
        self._images: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self._queue: queue.Queue[str] = queue.Queue()
        self._worker: threading.Thread | None = None

    def submit(self, request: GenerationRequest) -> str:
        validate_request(request)
        job_id = uuid.uuid4().hex
        job = GenerationJob(
            job_id=job_id,
            request_digest=request_digest(request),
            state=JobState.QUEUED,
            created_at=time.time(),
        )
        with self._lock:
            self._jobs[job_id] = job
            self._requests[job_id] = request
        self._queue.put(job_id)
        if self._auto_run:
            self._ensure_worker()
        return job_id

    def poll(self, job_id: str) -> GenerationJob:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise KeyError(f"unknown job {job_id!r}")
            return replace(job, results=list(job.results))

    def fetch_image(self, image_id: str) -> np.ndarray:
        with self._lock:
            arr = self._images.get(image_id)
            if arr is None:
                raise KeyError(f"unknown image {image_id!r}")
            return arr.copy()

    def descriptor(self) -> BackendDescriptor:
        return BackendDescriptor(name="mock", kinds=KINDS, max_resolution=2048)

    def run_pending(self) -> int:
        """Execute queued jobs on the calling thread; returns how many ran."""
        ran = 0
        while True:
            try:
                job_id = self._queue.get_nowait()
            except queue.Empty:
                return ran
            self._execute(job_id)
            ran += 1

    def _ensure_worker(self) -> None:
        if self._worker is not None and self._worker.is_alive():
            return
        self._worker = threading.Thread(target=self._drain, daemon=True)
        self._worker.start()

    def _drain(self) -> None:
        while True:
            try:
                job_id = self._queue.get(timeout=0.5)
            except queue.Empty:
                return
            self._execute(job_id)

    def _transition(self, job: GenerationJob, state: JobState) -> None:
        if state not in _ALLOWED_TRANSITIONS[job.state]:
            raise RuntimeError(f"illegal job transition {job.state} -> {state}")
        job.state = state

    def _execute(self, job_id: str) -> None:
        with self._lock:
            job = self._jobs[job_id]
            request = self._requests[job_id]
            self._transition(job, JobState.RUNNING)
            job.started_at = time.time()
        try:
            images = mock_generate(request)
        except Exception as exc:  # surface the failure through the job
            log.warning("mock generation failed: %s", exc)
            with self._lock:
                self._transition(job, JobState.FAILED)
                job.error = str(exc)
                job.finished_at = time.time()
            return
        with self._lock:
            for arr in images:
                ref = ImageRef(image_content_id(arr), arr.shape[1], arr.shape[0])
                self._images[ref.image_id] = arr
                job.results.append(ref)
            self._transition(job, JobState.DONE)
            job.finished_at = time.time()


# --- HTTP client -----------------------------------------------------------


class HttpBackend:
    """Client for any service that speaks the /v1 generation protocol."""

    def __init__(self, base_url: str, client=None) -> None:
        import httpx

        self._client = client or httpx.Client(base_url=base_url, timeout=60.0)
        self._base_url = base_url
        self._jobs: dict[str, GenerationJob] = {}
        self._images: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def submit(self, request: GenerationRequest) -> str:
        validate_request(request)
        digest = request_digest(request)
        resp = self._post("/v1/generate", request_to_wire(request))
        job_id = str(resp["job_id"])
        with self._lock:
            self._jobs[job_id] = GenerationJob(
                job_id=job_id,
                request_digest=digest,
                state=JobState.QUEUED,
                created_at=time.time(),
            )
        return job_id

    def poll(self, job_id: str) -> GenerationJob:
        doc = self._get(f"/v1/jobs/{job_id}")
        state = JobState(doc["state"])
        with self._lock:
            job = self._jobs.setdefault(
                job_id,
                GenerationJob(job_id=job_id, request_digest="", state=state, created_at=time.time()),
            )
            if state == JobState.RUNNING and job.started_at is None:
                job.started_at = time.time()
            if state == JobState.DONE and not job.results:
                for encoded in doc.get("images", []):
                    arr = pngio.decode_rgb_png(pngio.from_b64(encoded))
                    ref = ImageRef(image_content_id(arr), arr.shape[1], arr.shape[0])
                    self._images[ref.image_id] = arr
                    job.results.append(ref)
                job.finished_at = time.time()
            if state == JobState.FAILED:
                job.error = doc.get("error")
                job.finished_at = job.finished_at or time.time()
            job.state = state
            return replace(job, results=list(job.results))

    def fetch_image(self, image_id: str) -> np.ndarray:
        with self._lock:
            arr = self._images.get(image_id)
            if arr is None:
                raise KeyError(f"unknown image {image_id!r}; poll the job first")
            return arr.copy()

    def descriptor(self) -> BackendDescriptor:
        doc = self._get("/v1/health")
        return BackendDescriptor(
            name=str(doc.get("name", "remote")),
            kinds=tuple(doc.get("kinds", KINDS)),
            max_resolution=int(doc.get("max_resolution", 2048)),
            endpoint=self._base_url,
        )

    def _post(self, path: str, payload: dict) -> dict:
        import httpx

        try:
            resp = self._client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"backend unreachable: {exc}") from exc
        if resp.status_code == 422:
            raise RequestInvariantError(resp.json().get("detail", "request rejected"))
        if resp.status_code >= 400:
            raise BackendUnavailable(f"backend error {resp.status_code}: {resp.text}")
        return resp.json()

    def _get(self, path: str) -> dict:
        import httpx

        try:
            resp = self._client.get(path)
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"backend unreachable: {exc}") from exc
        if resp.status_code == 404:
            raise KeyError(f"backend does not know {path}")
        if resp.status_code >= 400:
            raise BackendUnavailable(f"backend error {resp.status_code}: {resp.text}")
        return resp.json()


# --- protocol server -------------------------------------------------------


def build_protocol_app(backend: Backend):
    """FastAPI app exposing any backend over the /v1 wire protocol."""
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import JSONResponse

    app = FastAPI(title="generation backend", docs_url=None, redoc_url=None)

    @app.post("/v1/generate")
    def generate(payload: dict) -> dict:
        try:
            request = request_from_wire(payload)
            job_id = backend.submit(request)
        except RequestInvariantError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"job_id": job_id}

    @app.get("/v1/jobs/{job_id}")
    def job_status(job_id: str) -> JSONResponse:
        try:
            job = backend.poll(job_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id!r}")
        doc: dict = {"job_id": job.job_id, "state": job.state.value}
        if job.state == JobState.DONE:
            doc["images"] = [
                pngio.to_b64(pngio.encode_rgb_png(backend.fetch_image(ref.image_id)))
                for ref in job.results
            ]
        if job.state == JobState.FAILED:
            doc["error"] = job.error
        return JSONResponse(doc)

    @app.get("/v1/health")
    def health() -> dict:
        desc = backend.descriptor()
        return {
            "status": "ok",
            "name": desc.name,
            "kinds": list(desc.kinds),
            "max_resolution": desc.max_resolution,
        }

    return app
