"""Generation backend tests: contracts, wire codec, determinism, lifecycle."""
import threading
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from worldsmith import pngio
from worldsmith.backend import (
    GenerationRequest,
    HttpBackend,
    JobState,
    MockBackend,
    RegionCondition,
    RequestInvariantError,
    build_protocol_app,
    canonical_request_bytes,
    mock_generate,
    mock_texture,
    region_fill_color,
    request_digest,
    request_from_wire,
    request_to_wire,
    validate_request,
)
from worldsmith.canonical import image_content_id


def _mask(h, w, rows=slice(0, 4)):
    m = np.zeros((h, w), dtype=bool)
    m[rows] = True
    return m


def _req(**overrides):
    base = dict(kind="text2img", prompt="a salt flat", width=32, height=32, seed=7, count=2)
    base.update(overrides)
    return GenerationRequest(**base)


class TestValidation:
    def test_text2img_rejects_extras(self):
        init = np.zeros((32, 32, 3), dtype=np.uint8)
        with pytest.raises(RequestInvariantError, match="prompt only"):
            validate_request(_req(init_image=init))
        with pytest.raises(RequestInvariantError, match="prompt only"):
            validate_request(_req(regions=[RegionCondition("hill", _mask(32, 32))]))

    def test_img2img_requires_init(self):
        with pytest.raises(RequestInvariantError, match="init image"):
            validate_request(_req(kind="img2img"))

    def test_img2img_rejects_mask_but_allows_regions(self):
        init = np.zeros((32, 32, 3), dtype=np.uint8)
        validate_request(
            _req(kind="img2img", init_image=init, regions=[RegionCondition("hill", _mask(32, 32))])
        )
        with pytest.raises(RequestInvariantError, match="blend mask"):
            validate_request(
                _req(kind="img2img", init_image=init, mask_image=np.zeros((32, 32), dtype=np.uint8))
            )

    def test_region_guided_requires_regions_and_nothing_else(self):
        with pytest.raises(RequestInvariantError, match="at least one region"):
            validate_request(_req(kind="region_guided"))
        init = np.zeros((32, 32, 3), dtype=np.uint8)
        with pytest.raises(RequestInvariantError, match="regions only"):
            validate_request(
                _req(
                    kind="region_guided",
                    init_image=init,
                    regions=[RegionCondition("hill", _mask(32, 32))],
                )
            )

    def test_blend_requires_init_and_mask(self):
        init = np.zeros((32, 32, 3), dtype=np.uint8)
        with pytest.raises(RequestInvariantError, match="init image and mask"):
            validate_request(_req(kind="blend", init_image=init))

    def test_dimension_mismatches_rejected(self):
        init = np.zeros((16, 32, 3), dtype=np.uint8)
        with pytest.raises(RequestInvariantError, match="request resolution"):
            validate_request(_req(kind="img2img", init_image=init))
        with pytest.raises(RequestInvariantError, match="request resolution"):
            validate_request(
                _req(kind="region_guided", regions=[RegionCondition("hill", _mask(16, 32))])
            )

    def test_scalar_bounds(self):
        with pytest.raises(RequestInvariantError, match="count"):
            validate_request(_req(count=0))
        with pytest.raises(RequestInvariantError, match="strength"):
            validate_request(_req(strength=0.0))
        with pytest.raises(RequestInvariantError, match="strength"):
            validate_request(_req(strength=1.5))
        with pytest.raises(RequestInvariantError, match="seed"):
            validate_request(_req(seed=-1))
        with pytest.raises(RequestInvariantError, match="kind"):
            validate_request(_req(kind="sculpt"))

    def test_empty_region_text_rejected(self):
        with pytest.raises(RequestInvariantError, match="description"):
            validate_request(
                _req(kind="region_guided", regions=[RegionCondition("  ", _mask(32, 32))])
            )


class TestWire:
    def test_round_trip_preserves_canonical_bytes(self):
        init = np.arange(32 * 32 * 3, dtype=np.uint8).reshape(32, 32, 3)
        req = _req(
            kind="img2img",
            init_image=init,
            strength=0.4,
            regions=[RegionCondition("a hill", _mask(32, 32))],
        )
        back = request_from_wire(request_to_wire(req))
        assert canonical_request_bytes(back) == canonical_request_bytes(req)
        assert back == req

    def test_blend_round_trip(self):
        init = np.full((32, 32, 3), 9, dtype=np.uint8)
        mask = np.zeros((32, 32), dtype=np.uint8)
        mask[:, 16:] = 255
        req = _req(kind="blend", init_image=init, mask_image=mask)
        back = request_from_wire(request_to_wire(req))
        assert np.array_equal(back.mask_image, mask)
        assert request_digest(back) == request_digest(req)

    def test_malformed_document_rejected(self):
        with pytest.raises(RequestInvariantError, match="malformed"):
            request_from_wire({"prompt": "no kind"})
        doc = request_to_wire(_req())
        doc["init_image_png_b64"] = "not base64!!!"
        with pytest.raises(RequestInvariantError):
            request_from_wire(doc)

    def test_wire_validates_contracts(self):
        doc = request_to_wire(_req())
        doc["kind"] = "img2img"
        with pytest.raises(RequestInvariantError, match="init image"):
            request_from_wire(doc)

    def test_digest_sensitive_to_each_field(self):
        base = request_digest(_req())
        assert request_digest(_req(prompt="other")) != base
        assert request_digest(_req(seed=8)) != base
        assert request_digest(_req(count=3)) != base
        assert request_digest(_req(width=64, height=64)) != base


class TestMockDeterminism:
    def test_equal_requests_equal_bytes(self):
        a = mock_generate(_req())
        b = mock_generate(_req())
        assert len(a) == 2
        for left, right in zip(a, b):
            assert np.array_equal(left, right)
            assert pngio.encode_rgb_png(left) == pngio.encode_rgb_png(right)

    def test_indices_differ(self):
        a, b = mock_generate(_req())
        assert not np.array_equal(a, b)

    def test_seed_changes_output(self):
        a = mock_generate(_req())[0]
        b = mock_generate(_req(seed=8))[0]
        assert not np.array_equal(a, b)

    def test_img2img_zero_strength_limit(self):
        # At strength 1.0 the init vanishes entirely.
        init = np.full((32, 32, 3), 200, dtype=np.uint8)
        req = _req(kind="img2img", init_image=init, strength=1.0)
        out = mock_generate(req)[0]
        assert np.array_equal(out, mock_texture(req, 0))

    def test_img2img_mixes_init(self):
        init = np.zeros((32, 32, 3), dtype=np.uint8)
        req = _req(kind="img2img", init_image=init, strength=0.5)
        out = mock_generate(req)[0].astype(np.float64)
        expected = np.rint(0.5 * mock_texture(req, 0).astype(np.float64))
        assert np.array_equal(out, expected)

    def test_blend_mask_zero_is_identity(self):
        init = np.arange(32 * 32 * 3, dtype=np.uint8).reshape(32, 32, 3)
        req = _req(kind="blend", init_image=init, mask_image=np.zeros((32, 32), dtype=np.uint8))
        out = mock_generate(req)[0]
        assert np.array_equal(out, init)

    def test_blend_mask_full_is_texture(self):
        init = np.zeros((32, 32, 3), dtype=np.uint8)
        req = _req(
            kind="blend", init_image=init, mask_image=np.full((32, 32), 255, dtype=np.uint8)
        )
        out = mock_generate(req)[0]
        assert np.array_equal(out, mock_texture(req, 0))

    def test_region_paint_exact(self):
        mask = _mask(32, 32, rows=slice(5, 9))
        req = _req(kind="region_guided", regions=[RegionCondition("emerald bog", mask)])
        out = mock_generate(req)[0]
        color = np.array(region_fill_color("emerald bog"), dtype=np.uint8)
        assert np.all(out[mask] == color)
        texture = mock_texture(req, 0)
        assert np.array_equal(out[~mask], texture[~mask])

    def test_region_color_never_black(self):
        assert region_fill_color("emerald bog") != (0, 0, 0)


class TestMockLifecycle:
    def test_manual_mode_exposes_queued_state(self):
        backend = MockBackend(auto_run=False)
        job_id = backend.submit(_req())
        assert backend.poll(job_id).state == JobState.QUEUED
        assert backend.run_pending() == 1
        job = backend.poll(job_id)
        assert job.state == JobState.DONE
        assert len(job.results) == 2
        for ref in job.results:
            arr = backend.fetch_image(ref.image_id)
            assert image_content_id(arr) == ref.image_id

    def test_auto_mode_completes(self):
        backend = MockBackend()
        job_id = backend.submit(_req(count=1))
        deadline = time.time() + 5.0
        while time.time() < deadline:
            job = backend.poll(job_id)
            if job.state == JobState.DONE:
                break
            time.sleep(0.01)
        assert backend.poll(job_id).state == JobState.DONE

    def test_unknown_job_raises(self):
        backend = MockBackend(auto_run=False)
        with pytest.raises(KeyError):
            backend.poll("nope")
        with pytest.raises(KeyError):
            backend.fetch_image("nope")

    def test_failure_path(self, monkeypatch):
        backend = MockBackend(auto_run=False)
        job_id = backend.submit(_req())
        monkeypatch.setattr(
            "worldsmith.backend.mock_generate",
            lambda req: (_ for _ in ()).throw(RuntimeError("gpu on fire")),
        )
        backend.run_pending()
        job = backend.poll(job_id)
        assert job.state == JobState.FAILED
        assert "gpu on fire" in job.error

    def test_submit_validates(self):
        backend = MockBackend(auto_run=False)
        with pytest.raises(RequestInvariantError):
            backend.submit(_req(count=0))

    def test_concurrent_submissions(self):
        backend = MockBackend()
        ids = []

        def submit():
            ids.append(backend.submit(_req(count=1)))

        threads = [threading.Thread(target=submit) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        deadline = time.time() + 10.0
        while time.time() < deadline:
            states = {backend.poll(j).state for j in ids}
            if states == {JobState.DONE}:
                break
            time.sleep(0.01)
        assert {backend.poll(j).state for j in ids} == {JobState.DONE}


class TestProtocolApp:
    def _client(self):
        backend = MockBackend(auto_run=False)
        return backend, TestClient(build_protocol_app(backend))

    def test_full_round_trip(self):
        backend, client = self._client()
        req = _req(count=1)
        resp = client.post("/v1/generate", json=request_to_wire(req))
        assert resp.status_code == 200
        job_id = resp.json()["job_id"]
        assert client.get(f"/v1/jobs/{job_id}").json()["state"] == "queued"
        backend.run_pending()
        doc = client.get(f"/v1/jobs/{job_id}").json()
        assert doc["state"] == "done"
        arr = pngio.decode_rgb_png(pngio.from_b64(doc["images"][0]))
        assert np.array_equal(arr, mock_generate(req)[0])

    def test_invalid_request_is_422(self):
        _, client = self._client()
        doc = request_to_wire(_req())
        doc["count"] = 0
        resp = client.post("/v1/generate", json=doc)
        assert resp.status_code == 422
        assert "count" in resp.json()["detail"]

    def test_unknown_job_is_404(self):
        _, client = self._client()
        assert client.get("/v1/jobs/missing").status_code == 404

    def test_health(self):
        _, client = self._client()
        doc = client.get("/v1/health").json()
        assert doc["status"] == "ok"
        assert set(doc["kinds"]) == {"text2img", "img2img", "region_guided", "blend"}

    def test_http_backend_against_app(self):
        backend = MockBackend(auto_run=False)
        client = TestClient(build_protocol_app(backend))
        remote = HttpBackend("http://testserver", client=client)
        req = _req(count=2)
        job_id = remote.submit(req)
        assert remote.poll(job_id).state == JobState.QUEUED
        backend.run_pending()
        job = remote.poll(job_id)
        assert job.state == JobState.DONE
        assert job.request_digest == request_digest(req)
        locals_ = mock_generate(req)
        for ref, expected in zip(job.results, locals_):
            assert np.array_equal(remote.fetch_image(ref.image_id), expected)

    def test_http_backend_rejects_invalid(self):
        backend = MockBackend(auto_run=False)
        client = TestClient(build_protocol_app(backend))
        remote = HttpBackend("http://testserver", client=client)
        with pytest.raises(RequestInvariantError):
            remote.submit(_req(count=0))

    def test_http_backend_descriptor(self):
        backend = MockBackend(auto_run=False)
        client = TestClient(build_protocol_app(backend))
        remote = HttpBackend("http://testserver", client=client)
        desc = remote.descriptor()
        assert desc.name == "mock"
        assert desc.endpoint == "http://testserver"


class TestCrossProcessDeterminism:
    def test_png_bytes_stable_across_interpreter(self, tmp_path):
        # A fresh interpreter must produce byte-identical PNGs for the
        # same request: no process-level salt may leak into results.
        import subprocess
        import sys

        req = _req(count=1, seed=1234)
        here = pngio.encode_rgb_png(mock_generate(req)[0])
        script = (
            "import sys\n"
            "from worldsmith.backend import GenerationRequest, mock_generate\n"
            "from worldsmith import pngio\n"
            "req = GenerationRequest(kind='text2img', prompt='a salt flat',"
            " width=32, height=32, seed=1234, count=1)\n"
            "sys.stdout.buffer.write(pngio.encode_rgb_png(mock_generate(req)[0]))\n"
        )
        out = subprocess.run(
            [sys.executable, "-c", script], capture_output=True, check=True
        ).stdout
        assert out == here
