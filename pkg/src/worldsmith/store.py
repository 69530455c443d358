"""Disk persistence: content-addressed images and per-session state dirs.

Layout under a data root:

    <root>/<session_id>/session.json    tile layout + working inputs
    <root>/<session_id>/tree.json       one history tree per tile
    <root>/<session_id>/events.ndjson   interaction log (plus .idx sidecar)
    <root>/<session_id>/images/         PNGs named by content id

Images are immutable once written (their name is a digest of their
pixels), so writes are skip-if-present.  JSON state is replaced
atomically: write a temp file, fsync, rename over the old one.  A crash
therefore leaves either the old state or the new, never a mix.
"""
from __future__ import annotations

import json
import os
import re
import uuid

import numpy as np

from . import pngio
from .canonical import image_content_id
from .model import ModelError, SketchLayer, WorldSession, session_from_dict, session_to_dict
from .tree import ImageRef, TileTree

_SESSION_ID = re.compile(r"^[A-Za-z0-9_-]{1,64}$")


class StoreError(RuntimeError):
    """Persisted state is missing or does not match its digest."""


def _fsync_dir(path: str) -> None:
    fd = os.open(path, os.O_RDONLY)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


def _write_atomic(path: str, data: bytes) -> None:
    directory = os.path.dirname(path) or "."
    tmp = os.path.join(directory, f".tmp-{uuid.uuid4().hex}")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    _fsync_dir(directory)


def save_json(path: str | os.PathLike, doc: dict) -> None:
    _write_atomic(os.fspath(path), json.dumps(doc, sort_keys=True).encode("utf-8"))


def load_json(path: str | os.PathLike) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


class ImageStore:
    """PNG files keyed by content id; verified on every read."""

    def __init__(self, root: str | os.PathLike) -> None:
        self._root = os.fspath(root)
        os.makedirs(self._root, exist_ok=True)

    @property
    def root(self) -> str:
        return self._root

    def _path(self, image_id: str, rgba: bool) -> str:
        if not re.fullmatch(r"[0-9a-f]{64}", image_id):
            raise StoreError(f"malformed image id {image_id!r}")
        suffix = ".rgba.png" if rgba else ".png"
        return os.path.join(self._root, image_id + suffix)

    def put_rgb(self, arr: np.ndarray) -> ImageRef:
        arr = np.asarray(arr)
        image_id = image_content_id(arr)
        path = self._path(image_id, rgba=False)
        if not os.path.exists(path):
            _write_atomic(path, pngio.encode_rgb_png(arr))
        return ImageRef(image_id, arr.shape[1], arr.shape[0])

    def put_rgba(self, arr: np.ndarray) -> str:
        arr = np.asarray(arr)
        image_id = image_content_id(arr)
        path = self._path(image_id, rgba=True)
        if not os.path.exists(path):
            _write_atomic(path, pngio.encode_rgba_png(arr))
        return image_id

    def get_rgb(self, image_id: str) -> np.ndarray:
        path = self._path(image_id, rgba=False)
        if not os.path.exists(path):
            raise KeyError(f"unknown image {image_id!r}")
        arr = pngio.decode_rgb_png(open(path, "rb").read())
        if image_content_id(arr) != image_id:
            raise StoreError(f"image {image_id!r} does not match its digest")
        return arr

    def get_rgba(self, image_id: str) -> np.ndarray:
        path = self._path(image_id, rgba=True)
        if not os.path.exists(path):
            raise KeyError(f"unknown image {image_id!r}")
        arr = pngio.decode_rgba_png(open(path, "rb").read())
        if image_content_id(arr) != image_id:
            raise StoreError(f"image {image_id!r} does not match its digest")
        return arr

    def has_rgb(self, image_id: str) -> bool:
        return os.path.exists(self._path(image_id, rgba=False))

    def png_path(self, image_id: str) -> str:
        """Path of a stored RGB PNG, for streaming responses."""
        path = self._path(image_id, rgba=False)
        if not os.path.exists(path):
            raise KeyError(f"unknown image {image_id!r}")
        return path


class SessionStore:
    """One directory per session under a data root."""

    def __init__(self, root: str | os.PathLike) -> None:
        self._root = os.fspath(root)
        os.makedirs(self._root, exist_ok=True)

    @property
    def root(self) -> str:
        return self._root

    def session_dir(self, session_id: str) -> str:
        if not _SESSION_ID.match(session_id):
            raise StoreError(f"malformed session id {session_id!r}")
        return os.path.join(self._root, session_id)

    def exists(self, session_id: str) -> bool:
        return os.path.exists(os.path.join(self.session_dir(session_id), "session.json"))

    def images(self, session_id: str) -> ImageStore:
        return ImageStore(os.path.join(self.session_dir(session_id), "images"))

    def events_path(self, session_id: str) -> str:
        return os.path.join(self.session_dir(session_id), "events.ndjson")

    def save(self, session: WorldSession) -> None:
        """Persist layout, inputs, and every tile's history tree."""
        directory = self.session_dir(session.session_id)
        os.makedirs(directory, exist_ok=True)
        save_json(os.path.join(directory, "session.json"), session_to_dict(session))
        trees = {tile.tile_id: tile.tree.export() for tile in session.tile_list()}
        save_json(os.path.join(directory, "tree.json"), trees)

    def load(self, session_id: str) -> WorldSession:
        directory = self.session_dir(session_id)
        session_path = os.path.join(directory, "session.json")
        if not os.path.exists(session_path):
            raise KeyError(f"unknown session {session_id!r}")
        images = self.images(session_id)

        def resolve_sketch(content_id: str, width: int, height: int) -> SketchLayer:
            layer = SketchLayer.from_rgba(images.get_rgba(content_id))
            if (layer.width, layer.height) != (width, height):
                raise StoreError(f"sketch {content_id!r} has unexpected dimensions")
            return layer

        try:
            session = session_from_dict(load_json(session_path), resolve_sketch)
        except (ModelError, KeyError, ValueError) as exc:
            raise StoreError(f"session {session_id!r} failed to load: {exc}") from exc
        tree_path = os.path.join(directory, "tree.json")
        if os.path.exists(tree_path):
            trees = load_json(tree_path)
            for tile_id, doc in trees.items():
                tile = session.tiles.get(tile_id)
                if tile is None:
                    raise StoreError(f"tree for unknown tile {tile_id!r}")
                tile.tree = TileTree.import_(doc)
        return session

    def list_sessions(self) -> list[str]:
        out = []
        for name in sorted(os.listdir(self._root)):
            if _SESSION_ID.match(name) and os.path.exists(
                os.path.join(self._root, name, "session.json")
            ):
                out.append(name)
        return out
