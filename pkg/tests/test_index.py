import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sofa.core import Dataset, squared_distances
from sofa.index import (IndexConfig, IndexTree, audit_lbd_chains, audit_tree, build_index,
                        choose_split_position, insert, leaf_content, node_lower_bound, split_leaf, Node)
from sofa.sax import SaxModel
from sofa.sfa import learn_mcb, lower_bounds


@pytest.fixture(scope="module")
def walk_model(walk_small):
    ds, _ = walk_small
    return learn_mcb(ds, 16, 256, 0.1, "ew", seed=1)


def _ids(ds):
    return np.arange(ds.series_count)


@pytest.mark.parametrize("capacity,init", [(50, 1), (200, 1), (10, 2), (5000, 1), (100, 3)])
def test_bulk_build_passes_audit(walk_small, walk_model, capacity, init):
    ds, _ = walk_small
    tree = build_index(ds, walk_model, IndexConfig(capacity, init))
    rep = audit_tree(tree, expected_ids=_ids(ds))
    assert rep.ok, rep.problems
    assert rep.series == ds.series_count
    assert tree.series_count == ds.series_count


def test_leaf_content_independent_of_workers(walk_small, walk_model):
    ds, _ = walk_small
    trees = [build_index(ds, walk_model, IndexConfig(40, 1, w)) for w in (1, 2, 4)]
    c = [leaf_content(t) for t in trees]
    assert c[0] == c[1] == c[2]


def test_incremental_insert_keeps_invariants(walk_small, walk_model, rng):
    ds, _ = walk_small
    tree = IndexTree(walk_model, IndexConfig(30, 1))
    words = walk_model.transform(ds.values)
    for i in rng.permutation(ds.series_count)[:1500]:
        insert(tree, int(i), words[i])
    rep = audit_tree(tree)
    assert rep.ok, rep.problems
    assert rep.series == 1500


def test_identical_words_make_an_overflow_leaf():
    m = SaxModel(16, 4, 4)
    tree = IndexTree(m, IndexConfig(3, 1))
    for i in range(10):
        tree.insert(i, np.array([1, 2, 3, 0], dtype=np.uint8))
    leaves = tree.leaves()
    assert len(leaves) == 1 and leaves[0].overflow and leaves[0].size == 10
    assert audit_tree(tree, expected_ids=range(10)).ok
    # a differing word makes the overflow leaf splittable again
    tree.insert(10, np.array([1, 2, 3, 1], dtype=np.uint8))
    assert audit_tree(tree, expected_ids=range(11)).ok
    assert sum(leaf.overflow for leaf in tree.leaves()) == 1


def test_split_prefers_balance_then_lowest_position():
    # position 0 splits 2/2, position 1 splits 3/1, position 2 splits 2/2
    w = np.array([[0, 0, 0], [0, 2, 2], [2, 2, 0], [2, 2, 2]], dtype=np.uint8)
    assert choose_split_position(w, np.array([1, 1, 1]), 2) == 0
    # positions already at full cardinality or constant are ineligible
    assert choose_split_position(w, np.array([2, 1, 2]), 2) == 1
    assert choose_split_position(w[:1], np.array([1, 1, 1]), 2) is None


def test_split_leaf_children_partition_payload():
    leaf = Node(np.zeros(2, dtype=np.uint8), np.ones(2, dtype=np.uint8))
    w = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=np.uint8)
    leaf.set_payload(np.arange(4), w)
    split_leaf(leaf, 2, capacity=1)
    got = sorted(tuple(n.ids.tolist()) for n in _walk_leaves(leaf))
    assert got == [(0,), (1,), (2,), (3,)]


def _walk_leaves(node):
    if node.is_leaf:
        return [node]
    return _walk_leaves(node.children[0]) + _walk_leaves(node.children[1])


def test_init_cardinality_above_bits_rejected():
    with pytest.raises(ValueError):
        IndexTree(SaxModel(16, 4, 4), IndexConfig(10, 3))
    with pytest.raises(ValueError):
        IndexConfig(0)
    with pytest.raises(ValueError):
        IndexConfig(summarizer="pca")


def test_node_bounds_chain_down_to_series(walk_small, walk_model):
    ds, qs = walk_small
    tree = build_index(ds, walk_model, IndexConfig(25, 1))
    assert audit_lbd_chains(tree, ds.values, qs, chains=1000, seed=5) == []


def test_node_bound_below_every_member(walk_small, walk_model):
    ds, qs = walk_small
    tree = build_index(ds, walk_model, IndexConfig(100, 1))
    proj = walk_model.project(qs[0])
    for _, node in tree.iter_nodes():
        if node.is_leaf and node.size:
            nb = node_lower_bound(proj, node, walk_model)
            lo, hi = walk_model.word_bounds(node.words)
            member = lower_bounds(proj, lo, hi, walk_model.weights)
            assert np.all(nb <= member)
            assert np.all(member <= squared_distances(ds.values[node.ids], qs[0]) + 1e-5)


@pytest.mark.parametrize("summ", ["sfa", "sax"])
def test_snapshot_roundtrip_bit_exact(walk_small, walk_model, summ, tmp_path):
    ds, _ = walk_small
    model = walk_model if summ == "sfa" else SaxModel(ds.series_length, 16, 256)
    tree = build_index(ds, model, IndexConfig(60, 1, 1, summ))
    tree.data_hash = bytes(range(32))
    blob = tree.to_bytes()
    back = IndexTree.from_bytes(blob)
    assert back.to_bytes() == blob
    assert leaf_content(back) == leaf_content(tree)
    assert back.data_hash == tree.data_hash
    tree.save(tmp_path / "idx")
    assert IndexTree.load(tmp_path / "idx").to_bytes() == blob
    with pytest.raises(ValueError):
        IndexTree.from_bytes(blob[:-3])


def test_corrupted_model_hash_is_rejected(walk_small, walk_model):
    ds, _ = walk_small
    blob = bytearray(build_index(ds, walk_model, IndexConfig(500)).to_bytes())
    blob[40] ^= 0xFF  # inside the embedded model hash
    with pytest.raises(ValueError):
        IndexTree.from_bytes(bytes(blob))


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.integers(1, 2))
def test_random_corpora_build_and_audit(seed, capacity, init):
    r = np.random.default_rng(seed)
    raw = np.cumsum(r.normal(size=(int(r.integers(1, 300)), 32)), axis=1)
    ds = Dataset.from_raw(raw)
    model = SaxModel(32, 4, 8)
    tree = build_index(ds, model, IndexConfig(capacity, init))
    assert audit_tree(tree, expected_ids=np.arange(ds.series_count)).ok
