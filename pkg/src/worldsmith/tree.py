"""Branching, append-only history of generation states for one tile.

Every tile carries a tree of input snapshots.  Node zero is a blank
sentinel; generating with inputs whose canonical digest matches the selected
node appends the new results to that node, while a differing digest inserts
a fresh child of the selected node and selects it.  Users can also branch by
hand, either copying a node's snapshot or starting blank.  Nodes are never
rewritten or removed, so every generated image stays reachable.

Node ids are sequential per tile ("n0", "n1", ...), which keeps replayed
sessions structurally identical to the recordings they came from.
"""
from __future__ import annotations

import base64
import time
from dataclasses import dataclass, field

from .canonical import CanonicalSnapshot, sha256_hex

EXPORT_FORMAT = "worldsmith.tree"
EXPORT_VERSION = 1

MANUAL_MODES = ("copy", "blank")


class TreeError(ValueError):
    """Structural violation: unknown node, bad import document, and so on."""


@dataclass(frozen=True)
class ImageRef:
    """Content-addressed handle to a stored image."""

    image_id: str
    width: int
    height: int

    def to_dict(self) -> dict:
        return {"image_id": self.image_id, "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, doc: dict) -> "ImageRef":
        return cls(str(doc["image_id"]), int(doc["width"]), int(doc["height"]))


@dataclass
class TreeNode:
    node_id: str
    parent_id: str | None
    snapshot: CanonicalSnapshot
    label: str
    created_at: int  # epoch milliseconds
    children: list[str] = field(default_factory=list)
    results: list[ImageRef] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)

    @property
    def digest(self) -> str:
        return self.snapshot.digest


def _now_ms() -> int:
    return int(time.time() * 1000)


class TileTree:
    """Mutable append-only tree with a selection cursor."""

    def __init__(self, root_snapshot: CanonicalSnapshot, created_at: int | None = None):
        root = TreeNode(
            node_id="n0",
            parent_id=None,
            snapshot=root_snapshot,
            label="",
            created_at=_now_ms() if created_at is None else created_at,
        )
        self.nodes: dict[str, TreeNode] = {root.node_id: root}
        self.root_id = root.node_id
        self.selected_id = root.node_id
        self._next_ordinal = 1

    def node(self, node_id: str) -> TreeNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise TreeError(f"unknown tree node {node_id!r}") from None

    @property
    def selected(self) -> TreeNode:
        return self.nodes[self.selected_id]

    def __len__(self) -> int:
        return len(self.nodes)

    def _insert(self, parent_id: str, snapshot: CanonicalSnapshot, label: str) -> TreeNode:
        node = TreeNode(
            node_id=f"n{self._next_ordinal}",
            parent_id=parent_id,
            snapshot=snapshot,
            label=label,
            created_at=_now_ms(),
        )
        self._next_ordinal += 1
        self.nodes[node.node_id] = node
        self.nodes[parent_id].children.append(node.node_id)
        return node

    def record_generation(
        self,
        snapshot: CanonicalSnapshot,
        results: list[ImageRef],
        seed: int,
        label: str,
        anchor_id: str | None = None,
    ) -> str:
        """File a finished generation under the right node.

        Unchanged inputs (digest equal to the anchor's) append to the anchor
        node.  Changed inputs insert a child of the anchor, which then
        becomes selected.  The anchor defaults to the selected node; callers
        that submitted work earlier pass the node that was selected at
        submit time so late results land where the user launched them.
        """
        selected = self.selected if anchor_id is None else self.node(anchor_id)
        if snapshot.digest == selected.snapshot.digest:
            selected.results.extend(results)
            selected.seeds.append(seed)
            return selected.node_id
        node = self._insert(selected.node_id, snapshot, label)
        node.results.extend(results)
        node.seeds.append(seed)
        self.selected_id = node.node_id
        return node.node_id

    def add_manual(self, at_node_id: str, mode: str) -> str:
        """Branch by hand from any node; the new node becomes selected."""
        if mode not in MANUAL_MODES:
            raise TreeError(f"unknown manual node mode {mode!r}")
        source = self.node(at_node_id)
        if mode == "copy":
            snapshot, label = source.snapshot, source.label
        else:
            snapshot, label = self.nodes[self.root_id].snapshot, ""
        node = self._insert(source.node_id, snapshot, label)
        self.selected_id = node.node_id
        return node.node_id

    def select(self, node_id: str) -> TreeNode:
        node = self.node(node_id)
        self.selected_id = node.node_id
        return node

    def walk(self) -> list[TreeNode]:
        """Nodes in creation order (root first)."""
        return [self.nodes[k] for k in sorted(self.nodes, key=lambda n: int(n[1:]))]

    def export(self) -> dict:
        return {
            "format": EXPORT_FORMAT,
            "version": EXPORT_VERSION,
            "root_id": self.root_id,
            "selected_id": self.selected_id,
            "next_ordinal": self._next_ordinal,
            "nodes": [
                {
                    "node_id": n.node_id,
                    "parent_id": n.parent_id,
                    "label": n.label,
                    "created_at": n.created_at,
                    "snapshot_b64": base64.b64encode(n.snapshot.data).decode("ascii"),
                    "digest": n.snapshot.digest,
                    "children": list(n.children),
                    "results": [r.to_dict() for r in n.results],
                    "seeds": list(n.seeds),
                }
                for n in self.walk()
            ],
        }

    @classmethod
    def import_(cls, doc: dict) -> "TileTree":
        """Rebuild a tree from an export document, validating integrity."""
        if doc.get("format") != EXPORT_FORMAT:
            raise TreeError("not a tree export document")
        if doc.get("version") != EXPORT_VERSION:
            raise TreeError(f"unsupported tree export version {doc.get('version')!r}")
        entries = doc.get("nodes", [])
        if not entries:
            raise TreeError("tree export has no nodes")

        tree = cls.__new__(cls)
        tree.nodes = {}
        for entry in entries:
            data = base64.b64decode(entry["snapshot_b64"])
            if sha256_hex(data) != entry["digest"]:
                raise TreeError(f"snapshot digest mismatch on node {entry['node_id']!r}")
            node = TreeNode(
                node_id=str(entry["node_id"]),
                parent_id=entry["parent_id"],
                snapshot=CanonicalSnapshot(data=data, digest=entry["digest"]),
                label=str(entry.get("label", "")),
                created_at=int(entry["created_at"]),
                children=[str(c) for c in entry.get("children", [])],
                results=[ImageRef.from_dict(r) for r in entry.get("results", [])],
                seeds=[int(s) for s in entry.get("seeds", [])],
            )
            if node.node_id in tree.nodes:
                raise TreeError(f"duplicate node id {node.node_id!r}")
            tree.nodes[node.node_id] = node

        tree.root_id = str(doc["root_id"])
        tree.selected_id = str(doc["selected_id"])
        tree._next_ordinal = int(doc["next_ordinal"])
        tree.check_integrity()
        return tree

    def check_integrity(self) -> None:
        roots = [n for n in self.nodes.values() if n.parent_id is None]
        if len(roots) != 1 or roots[0].node_id != self.root_id:
            raise TreeError("tree must have exactly one root")
        if self.selected_id not in self.nodes:
            raise TreeError("selected node does not exist")
        for node in self.nodes.values():
            if node.parent_id is not None:
                parent = self.nodes.get(node.parent_id)
                if parent is None:
                    raise TreeError(f"node {node.node_id!r} has unknown parent")
                if node.node_id not in parent.children:
                    raise TreeError(f"node {node.node_id!r} missing from parent children")
            for child_id in node.children:
                child = self.nodes.get(child_id)
                if child is None or child.parent_id != node.node_id:
                    raise TreeError(f"child link {node.node_id!r}->{child_id!r} is broken")
        # every node must reach the root, which also rules out cycles
        for node in self.nodes.values():
            seen = set()
            cursor = node
            while cursor.parent_id is not None:
                if cursor.node_id in seen:
                    raise TreeError("cycle detected in tree")
                seen.add(cursor.node_id)
                cursor = self.nodes[cursor.parent_id]
            if cursor.node_id != self.root_id:
                raise TreeError(f"node {node.node_id!r} is detached from the root")
