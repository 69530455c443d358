"""Persistence tests: content-addressed images, session round trips."""
import os

import numpy as np
import pytest

from worldsmith.canonical import image_content_id, make_snapshot
from worldsmith.model import (
    BrushAction,
    SketchLayer,
    add_region,
    canonicalize_inputs,
    create_session,
    encode_inputs,
)
from worldsmith.store import ImageStore, SessionStore, StoreError, load_json, save_json
from worldsmith.tree import ImageRef


def _rgb(seed=0):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(24, 32, 3), dtype=np.uint8)


class TestImageStore:
    def test_rgb_round_trip(self, tmp_path):
        store = ImageStore(tmp_path)
        arr = _rgb()
        ref = store.put_rgb(arr)
        assert ref == ImageRef(image_content_id(arr), 32, 24)
        assert np.array_equal(store.get_rgb(ref.image_id), arr)
        assert store.has_rgb(ref.image_id)

    def test_put_is_idempotent(self, tmp_path):
        store = ImageStore(tmp_path)
        arr = _rgb()
        a = store.put_rgb(arr)
        mtime = os.path.getmtime(store.png_path(a.image_id))
        b = store.put_rgb(arr)
        assert a == b
        assert os.path.getmtime(store.png_path(a.image_id)) == mtime
        assert len(os.listdir(tmp_path)) == 1

    def test_rgba_round_trip(self, tmp_path):
        store = ImageStore(tmp_path)
        rng = np.random.default_rng(3)
        arr = rng.integers(0, 256, size=(16, 16, 4), dtype=np.uint8)
        image_id = store.put_rgba(arr)
        assert np.array_equal(store.get_rgba(image_id), arr)

    def test_modes_do_not_collide(self, tmp_path):
        store = ImageStore(tmp_path)
        rgb = np.zeros((8, 8, 3), dtype=np.uint8)
        rgba = np.zeros((8, 8, 4), dtype=np.uint8)
        ref = store.put_rgb(rgb)
        rgba_id = store.put_rgba(rgba)
        assert ref.image_id != rgba_id

    def test_unknown_image_raises(self, tmp_path):
        store = ImageStore(tmp_path)
        with pytest.raises(KeyError):
            store.get_rgb("0" * 64)
        with pytest.raises(StoreError, match="malformed"):
            store.get_rgb("../escape")

    def test_corruption_detected(self, tmp_path):
        store = ImageStore(tmp_path)
        ref = store.put_rgb(_rgb())
        other = _rgb(9)
        from worldsmith import pngio

        with open(store.png_path(ref.image_id), "wb") as fh:
            fh.write(pngio.encode_rgb_png(other))
        with pytest.raises(StoreError, match="digest"):
            store.get_rgb(ref.image_id)

    def test_no_temp_files_left(self, tmp_path):
        store = ImageStore(tmp_path)
        for seed in range(4):
            store.put_rgb(_rgb(seed))
        assert not [n for n in os.listdir(tmp_path) if n.startswith(".tmp-")]


class TestSessionStore:
    def _populate(self, root):
        store = SessionStore(root)
        session = create_session("abc123", (1024, 1024), 4)
        tile = session.tile("t0")
        tile.inputs.scene_prompt = "a drowned citadel"
        tile.inputs.seed = 42
        add_region(
            tile,
            "kelp towers",
            [BrushAction("hull", [(8.0, 8.0), (120.0, 16.0), (60.0, 200.0)])],
        )
        images = store.images(session.session_id)

        rng = np.random.default_rng(1)
        sketch_img = rng.integers(0, 256, size=(512, 512, 3), dtype=np.uint8)
        coverage = np.zeros((512, 512), dtype=bool)
        coverage[10:40, 6:90] = True
        tile.inputs.sketch = SketchLayer(sketch_img, coverage)
        images.put_rgba(tile.inputs.sketch.to_rgba())

        result = rng.integers(0, 256, size=(512, 512, 3), dtype=np.uint8)
        ref = images.put_rgb(result)
        snapshot = canonicalize_inputs(tile.inputs)
        tile.tree.record_generation(snapshot, [ref], seed=42, label="citadel")
        tile.current_image = ref
        tile.inputs.base_image = ref
        store.save(session)
        return store, session

    def test_round_trip(self, tmp_path):
        store, original = self._populate(tmp_path)
        loaded = store.load("abc123")
        assert loaded.session_id == original.session_id
        assert loaded.grid_gap == original.grid_gap
        tile = loaded.tile("t0")
        source = original.tile("t0")
        assert tile.inputs.scene_prompt == source.inputs.scene_prompt
        assert tile.inputs.seed == 42
        assert [r.region_id for r in tile.inputs.regions] == ["r0"]
        assert tile.inputs.sketch is not None
        assert tile.inputs.sketch.content_id() == source.inputs.sketch.content_id()
        assert tile.current_image == source.current_image
        assert encode_inputs(tile.inputs) == encode_inputs(source.inputs)

    def test_trees_survive(self, tmp_path):
        store, original = self._populate(tmp_path)
        loaded = store.load("abc123")
        tree = loaded.tile("t0").tree
        assert tree.selected_id == "n1"
        assert tree.selected.results == original.tile("t0").tree.selected.results
        assert tree.selected.seeds == [42]
        tree.check_integrity()

    def test_save_is_overwriting_and_stable(self, tmp_path):
        store, session = self._populate(tmp_path)
        session.blend_prompt = "fog rolling in"
        store.save(session)
        assert store.load("abc123").blend_prompt == "fog rolling in"

    def test_unknown_session_raises(self, tmp_path):
        store = SessionStore(tmp_path)
        with pytest.raises(KeyError):
            store.load("missing0")
        with pytest.raises(StoreError, match="malformed"):
            store.session_dir("../etc")

    def test_list_sessions(self, tmp_path):
        store, _ = self._populate(tmp_path)
        other = create_session("zzz", (512, 512), 1)
        store.save(other)
        os.makedirs(tmp_path / "notasession")
        assert store.list_sessions() == ["abc123", "zzz"]

    def test_missing_sketch_data_is_loud(self, tmp_path):
        store, session = self._populate(tmp_path)
        sketch_id = session.tile("t0").inputs.sketch.content_id()
        os.remove(os.path.join(store.images("abc123").root, sketch_id + ".rgba.png"))
        with pytest.raises(StoreError, match="failed to load"):
            store.load("abc123")

    def test_json_helpers_atomic(self, tmp_path):
        path = tmp_path / "doc.json"
        save_json(path, {"a": 1})
        save_json(path, {"a": 2})
        assert load_json(path) == {"a": 2}
        assert not [n for n in os.listdir(tmp_path) if n.startswith(".tmp-")]
