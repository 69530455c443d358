"""Branching history semantics, checked against a reference interpreter."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from worldsmith.canonical import make_snapshot
from worldsmith.tree import ImageRef, TileTree, TreeError

import oracles


def _snap(text: str):
    return make_snapshot(text.encode())


def _refs(n, tag="x"):
    return [ImageRef(f"{tag}{i}".ljust(64, "0"), 8, 8) for i in range(n)]


EMPTY = _snap("")


def test_fresh_tree_has_selected_root():
    tree = TileTree(EMPTY)
    assert tree.root_id == "n0"
    assert tree.selected_id == "n0"
    assert len(tree) == 1
    assert tree.selected.results == []


def test_changed_inputs_insert_child_and_select():
    tree = TileTree(EMPTY)
    node_id = tree.record_generation(_snap("a"), _refs(2), seed=7, label="a")
    assert node_id == "n1"
    assert tree.selected_id == "n1"
    assert tree.nodes["n1"].parent_id == "n0"
    assert tree.nodes["n0"].children == ["n1"]
    assert len(tree.nodes["n1"].results) == 2
    assert tree.nodes["n1"].seeds == [7]


def test_unchanged_inputs_append_to_selected():
    tree = TileTree(EMPTY)
    tree.record_generation(_snap("a"), _refs(2), seed=1, label="a")
    node_id = tree.record_generation(_snap("a"), _refs(3, "y"), seed=2, label="a")
    assert node_id == "n1"
    assert len(tree) == 2
    assert len(tree.nodes["n1"].results) == 5
    assert tree.nodes["n1"].seeds == [1, 2]


def test_branching_from_older_node():
    tree = TileTree(EMPTY)
    tree.record_generation(_snap("a"), _refs(1), seed=1, label="a")
    tree.record_generation(_snap("b"), _refs(1), seed=2, label="b")
    tree.select("n1")
    node_id = tree.record_generation(_snap("c"), _refs(1), seed=3, label="c")
    assert node_id == "n3"
    assert tree.nodes["n3"].parent_id == "n1"
    assert set(tree.nodes["n1"].children) == {"n2", "n3"}


def test_select_then_regenerate_same_digest_appends_there():
    tree = TileTree(EMPTY)
    tree.record_generation(_snap("a"), _refs(1), seed=1, label="a")
    tree.record_generation(_snap("b"), _refs(1), seed=2, label="b")
    tree.select("n1")
    node_id = tree.record_generation(_snap("a"), _refs(2, "z"), seed=3, label="a")
    assert node_id == "n1"
    assert len(tree.nodes["n1"].results) == 3


def test_manual_copy_and_blank_nodes():
    tree = TileTree(EMPTY)
    tree.record_generation(_snap("a"), _refs(1), seed=1, label="scene a")
    copy_id = tree.add_manual("n1", "copy")
    assert tree.selected_id == copy_id
    assert tree.nodes[copy_id].snapshot.digest == _snap("a").digest
    assert tree.nodes[copy_id].label == "scene a"
    assert tree.nodes[copy_id].results == []
    blank_id = tree.add_manual("n1", "blank")
    assert tree.nodes[blank_id].snapshot.digest == EMPTY.digest
    assert tree.nodes[blank_id].parent_id == "n1"


def test_manual_mode_validation():
    tree = TileTree(EMPTY)
    with pytest.raises(TreeError, match="mode"):
        tree.add_manual("n0", "weird")


def test_select_unknown_node_raises():
    tree = TileTree(EMPTY)
    with pytest.raises(TreeError, match="unknown"):
        tree.select("n99")


def test_export_import_roundtrip():
    tree = TileTree(EMPTY)
    tree.record_generation(_snap("a"), _refs(2), seed=5, label="a")
    tree.add_manual("n0", "blank")
    tree.record_generation(_snap("b"), _refs(1, "b"), seed=6, label="b")
    doc = tree.export()
    back = TileTree.import_(doc)
    assert back.export() == doc
    assert back.selected_id == tree.selected_id
    assert back.nodes["n1"].seeds == [5]
    assert back.nodes["n1"].results == tree.nodes["n1"].results


def test_import_rejects_bad_digest():
    tree = TileTree(EMPTY)
    tree.record_generation(_snap("a"), _refs(1), seed=1, label="a")
    doc = tree.export()
    doc["nodes"][1]["digest"] = "0" * 64
    with pytest.raises(TreeError, match="digest"):
        TileTree.import_(doc)


def test_import_rejects_unknown_version():
    doc = TileTree(EMPTY).export()
    doc["version"] = 99
    with pytest.raises(TreeError, match="version"):
        TileTree.import_(doc)


def test_import_rejects_broken_links():
    tree = TileTree(EMPTY)
    tree.record_generation(_snap("a"), _refs(1), seed=1, label="a")
    doc = tree.export()
    doc["nodes"][0]["children"] = []
    with pytest.raises(TreeError):
        TileTree.import_(doc)


def test_import_rejects_second_root():
    tree = TileTree(EMPTY)
    tree.record_generation(_snap("a"), _refs(1), seed=1, label="a")
    doc = tree.export()
    doc["nodes"][1]["parent_id"] = None
    with pytest.raises(TreeError, match="root"):
        TileTree.import_(doc)


def test_distinct_generations_make_n_nodes():
    tree = TileTree(EMPTY)
    for i in range(10):
        tree.record_generation(_snap(f"state {i}"), _refs(1, f"g{i}"), seed=i, label="")
    assert len(tree) == 11  # root plus one node per distinct state


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=5), min_size=1, max_size=40), st.randoms())
def test_random_scripts_match_reference(ops, pyrandom):
    tree = TileTree(EMPTY)
    ref = oracles.RefTree(EMPTY.digest)
    states = ["", "a", "b", "c"]
    for op in ops:
        if op <= 2:  # generate from a randomly chosen state
            text = pyrandom.choice(states)
            snap = _snap(text)
            seed = pyrandom.randrange(1000)
            got = tree.record_generation(snap, _refs(1, f"s{seed}"), seed=seed, label=text)
            assert got == ref.generate(snap.digest, 1, seed)
        elif op == 3:
            node = pyrandom.choice(sorted(tree.nodes))
            mode = pyrandom.choice(["copy", "blank"])
            assert tree.add_manual(node, mode) == ref.add_manual(node, mode)
        else:
            node = pyrandom.choice(sorted(tree.nodes))
            tree.select(node)
            ref.select(node)
    shape = ref.shape()
    assert tree.selected_id == shape["selected"]
    assert set(tree.nodes) == set(shape["nodes"])
    for node_id, entry in shape["nodes"].items():
        node = tree.nodes[node_id]
        assert node.parent_id == entry["parent"]
        assert node.snapshot.digest == entry["digest"]
        assert len(node.results) == entry["results"]
        assert node.seeds == entry["seeds"]
        assert node.children == entry["children"]
    tree.check_integrity()


def test_walk_is_creation_order():
    tree = TileTree(EMPTY)
    tree.record_generation(_snap("a"), _refs(1), seed=1, label="")
    tree.add_manual("n0", "blank")
    ids = [n.node_id for n in tree.walk()]
    assert ids == ["n0", "n1", "n2"]


def test_anchored_record_ignores_later_selection():
    tree = TileTree(EMPTY)
    tree.record_generation(_snap("a"), _refs(1), seed=1, label="a")
    anchor = tree.selected_id
    tree.add_manual("n0", "blank")  # user wanders off before results land
    wandered = tree.selected_id
    assert wandered != anchor

    # same inputs as the anchor: results append there, selection untouched
    tree.record_generation(_snap("a"), _refs(2, "late"), seed=2, label="a", anchor_id=anchor)
    assert len(tree.nodes[anchor].results) == 3
    assert tree.selected_id == wandered

    # changed inputs: child of the anchor, selection follows the new node
    new_id = tree.record_generation(_snap("b"), _refs(1), seed=3, label="b", anchor_id=anchor)
    assert tree.nodes[new_id].parent_id == anchor
    assert tree.selected_id == new_id
    tree.check_integrity()
