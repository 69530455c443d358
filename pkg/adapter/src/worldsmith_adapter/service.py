"""The /v1 protocol server: a job queue in front of one pipeline.

Jobs move strictly queued -> running -> done | failed. Generation is
serialized to ``max_concurrent`` workers (one by default: a single device
runs a single generation at a time) while submissions and polls stay
non-blocking. Per-kind wall-clock latency is tracked and reported through
health metadata, informationally.
"""
from __future__ import annotations

import logging
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from .config import AdapterConfig
from .imageio import rgb_to_b64
from .pipeline import Pipeline, make_pipeline
from .wire import GenerationTask, WireError, parse_request

log = logging.getLogger(__name__)


@dataclass
class JobRecord:
    job_id: str
    state: str  # queued | running | done | failed
    task: GenerationTask
    images_b64: list[str] = field(default_factory=list)
    error: str | None = None
    created_at: float = 0.0
    started_at: float | None = None
    finished_at: float | None = None


class _LatencyStats:
    """Running mean + last sample per request kind."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._stats: dict[str, dict] = {}

    def record(self, kind: str, seconds: float) -> None:
        with self._lock:
            entry = self._stats.setdefault(kind, {"count": 0, "mean_s": 0.0, "last_s": 0.0})
            entry["count"] += 1
            entry["mean_s"] += (seconds - entry["mean_s"]) / entry["count"]
            entry["last_s"] = seconds

    def snapshot(self) -> dict:
        with self._lock:
            return {kind: dict(entry) for kind, entry in self._stats.items()}


class JobRunner:
    """Queue + worker threads executing tasks on the pipeline."""

    def __init__(self, pipeline: Pipeline, workers: int = 1) -> None:
        self._pipeline = pipeline
        self._jobs: dict[str, JobRecord] = {}
        self._lock = threading.Lock()
        self._queue: queue.Queue[str] = queue.Queue()
        self.latency = _LatencyStats()
        self._threads = [
            threading.Thread(target=self._work, daemon=True, name=f"gen-{i}")
            for i in range(workers)
        ]
        for t in self._threads:
            t.start()

    def submit(self, task: GenerationTask) -> str:
        job_id = uuid.uuid4().hex
        record = JobRecord(job_id=job_id, state="queued", task=task, created_at=time.time())
        with self._lock:
            self._jobs[job_id] = record
        self._queue.put(job_id)
        return job_id

    def poll(self, job_id: str) -> JobRecord:
        with self._lock:
            record = self._jobs.get(job_id)
            if record is None:
                raise KeyError(job_id)
            return JobRecord(
                job_id=record.job_id, state=record.state, task=record.task,
                images_b64=list(record.images_b64), error=record.error,
                created_at=record.created_at, started_at=record.started_at,
                finished_at=record.finished_at,
            )

    def _work(self) -> None:
        while True:
            job_id = self._queue.get()
            with self._lock:
                record = self._jobs[job_id]
                record.state = "running"
                record.started_at = time.time()
            try:
                images = self._pipeline.run(record.task)
                encoded = [rgb_to_b64(arr) for arr in images]
            except Exception as exc:
                log.warning("generation failed: %s", exc)
                with self._lock:
                    record.state = "failed"
                    record.error = str(exc)
                    record.finished_at = time.time()
                continue
            with self._lock:
                record.images_b64 = encoded
                record.state = "done"
                record.finished_at = time.time()
            self.latency.record(record.task.kind, record.finished_at - record.started_at)


def build_app(config: AdapterConfig | None = None, pipeline: Pipeline | None = None) -> FastAPI:
    """Wire a pipeline behind the three protocol endpoints."""
    config = config or AdapterConfig()
    pipeline = pipeline or make_pipeline(config)
    # never advertise more than the pipeline implements
    advertised = tuple(k for k in config.kinds if k in pipeline.kinds)
    runner = JobRunner(pipeline, workers=config.max_concurrent)

    app = FastAPI(title="worldsmith adapter", docs_url=None, redoc_url=None)
    app.state.config = config
    app.state.runner = runner

    @app.post("/v1/generate")
    def generate(payload: dict) -> dict:
        try:
            task = parse_request(payload)
        except WireError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        if task.kind not in advertised:
            raise HTTPException(status_code=422, detail=f"kind {task.kind!r} not enabled")
        if max(task.width, task.height) > config.max_resolution:
            raise HTTPException(
                status_code=422,
                detail=f"resolution exceeds the configured maximum {config.max_resolution}",
            )
        return {"job_id": runner.submit(task)}

    @app.get("/v1/jobs/{job_id}")
    def job_status(job_id: str) -> JSONResponse:
        try:
            record = runner.poll(job_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id!r}")
        doc: dict = {"job_id": record.job_id, "state": record.state}
        if record.state == "done":
            doc["images"] = record.images_b64
        if record.state == "failed":
            doc["error"] = record.error
        return JSONResponse(doc)

    @app.get("/v1/health")
    def health() -> dict:
        return {
            "status": "ok",
            "name": pipeline.name,
            "kinds": list(advertised),
            "max_resolution": config.max_resolution,
            "model": config.model,
            "device": config.device,
            "latency_s": runner.latency.snapshot(),
        }

    return app
