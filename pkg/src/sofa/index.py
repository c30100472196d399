"""Tree index over symbolic words with per-position variable cardinality.

The root maps each ``initial_cardinality``-bit word prefix to a subtree.
Inner nodes split on one position by promoting one more bit of that
position's symbol; leaves hold ``(series_id, full word)`` payloads.
"""
from __future__ import annotations

import hashlib
import io
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset
from .sfa import SfaWord, SymbolicModel, chunked_lower_bound, model_from_bytes

INDEX_MAGIC = b"SOFAIDX\x00"
INDEX_VERSION = 1
SUMMARIZERS = ("sfa", "sax")
_INNER, _LEAF, _OVERFLOW = 0, 1, 2


@dataclass
class IndexConfig:
    leaf_capacity: int = 20000
    initial_cardinality: int = 1
    worker_count: int = 1
    summarizer: str = "sfa"

    def __post_init__(self):
        if self.leaf_capacity < 1:
            raise ValueError("leaf_capacity must be >= 1")
        if not 1 <= self.initial_cardinality <= 8:
            raise ValueError("initial_cardinality must be in 1..8")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if self.summarizer not in SUMMARIZERS:
            raise ValueError(f"unknown summarizer {self.summarizer!r}")


class Node:
    """Root child, inner node or leaf.

    ``prefix[j]`` holds the top ``card[j]`` bits of symbol ``j`` shared by every
    series below this node.
    """

    __slots__ = ("prefix", "card", "children", "split_position", "_ids", "_words", "size", "overflow")

    def __init__(self, prefix, card):
        self.prefix = np.asarray(prefix, dtype=np.uint8).copy()
        self.card = np.asarray(card, dtype=np.uint8).copy()
        self.children = None
        self.split_position = -1
        self._ids = np.empty(0, dtype=np.int64)
        self._words = np.empty((0, len(self.prefix)), dtype=np.uint8)
        self.size = 0
        self.overflow = False

    @property
    def kind(self) -> str:
        return "leaf" if self.children is None else "inner"

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    @property
    def ids(self) -> np.ndarray:
        return self._ids[:self.size]

    @property
    def words(self) -> np.ndarray:
        return self._words[:self.size]

    @property
    def word(self) -> SfaWord:
        return SfaWord(self.prefix, self.card)

    def set_payload(self, ids, words):
        self._ids = np.asarray(ids, dtype=np.int64)
        self._words = np.asarray(words, dtype=np.uint8).reshape(len(self._ids), len(self.prefix))
        self.size = len(self._ids)

    def append(self, series_id: int, word) -> None:
        if self.size == len(self._ids):
            grow = max(16, 2 * self.size)
            ids = np.empty(grow, dtype=np.int64)
            words = np.empty((grow, len(self.prefix)), dtype=np.uint8)
            ids[:self.size] = self._ids[:self.size]
            words[:self.size] = self._words[:self.size]
            self._ids, self._words = ids, words
        self._ids[self.size] = series_id
        self._words[self.size] = word
        self.size += 1

    def child_bit(self, word, bits: int) -> int:
        """Which child a full-resolution word descends into."""
        p = self.split_position
        c = int(self.card[p]) + 1
        return (int(word[p]) >> (bits - c)) & 1

    def __repr__(self) -> str:
        return f"Node({self.kind}, size={self.size}, card={self.card.tolist()})"


def choose_split_position(words, card, bits: int):
    """Position whose next bit splits ``words`` most evenly, or ``None``.

    Only positions with spare cardinality whose symbols still differ are
    considered (promoting anything else cannot separate the payload).  Ties go
    to the lowest position.
    """
    w = np.asarray(words)
    card = np.asarray(card, dtype=np.int64)
    spare = card < bits
    varied = w.min(axis=0) != w.max(axis=0)
    eligible = np.flatnonzero(spare & varied)
    if len(eligible) == 0:
        return None
    shift = bits - card[eligible] - 1
    ones = ((w[:, eligible].astype(np.int64) >> shift) & 1).sum(axis=0)
    imbalance = np.abs(len(w) - 2 * ones)
    return int(eligible[np.argmin(imbalance)])


def _split(node: Node, p: int, bits: int) -> None:
    w = node.words
    c = int(node.card[p]) + 1
    bit = (w[:, p] >> (bits - c)) & 1
    children = []
    for b in (0, 1):
        prefix = node.prefix.copy()
        prefix[p] = (int(prefix[p]) << 1) | b
        card = node.card.copy()
        card[p] = c
        child = Node(prefix, card)
        mask = bit == b
        child.set_payload(node.ids[mask], w[mask])
        children.append(child)
    node.children = children
    node.split_position = p
    node.set_payload(np.empty(0, dtype=np.int64), np.empty((0, len(node.prefix)), dtype=np.uint8))


def split_leaf(leaf: Node, bits: int, capacity: int | None = None) -> Node:
    """Turn an over-full leaf into an inner node with two leaves.

    Children still above ``capacity`` are split again.  When no position can
    separate the payload the leaf is flagged as an overflow leaf and keeps
    everything.
    """
    p = choose_split_position(leaf.words, leaf.card, bits)
    if p is None:
        leaf.overflow = True
        return leaf
    _split(leaf, p, bits)
    if capacity is not None:
        for child in leaf.children:
            if child.size > capacity:
                split_leaf(child, bits, capacity)
    return leaf


def _build_subtree(prefix, card, ids, words, bits: int, capacity: int) -> Node:
    node = Node(prefix, card)
    node.set_payload(ids, words)
    stack = [node]
    while stack:
        cur = stack.pop()
        if cur.size <= capacity:
            continue
        p = choose_split_position(cur.words, cur.card, bits)
        if p is None:
            cur.overflow = True
            continue
        _split(cur, p, bits)
        stack.extend(cur.children)
    return node


class IndexTree:
    """Root map plus subtrees; built by :func:`build_index` or :meth:`insert`."""

    def __init__(self, model: SymbolicModel, config: IndexConfig):
        if config.initial_cardinality > model.bits:
            raise ValueError("initial cardinality exceeds the alphabet's bits")
        self.model = model
        self.config = config
        self.roots: dict[bytes, Node] = {}
        self.data_hash = bytes(32)
        self._flat = None

    @property
    def bits(self) -> int:
        return self.model.bits

    @property
    def word_length(self) -> int:
        return self.model.word_length

    def root_prefix(self, words) -> np.ndarray:
        shift = self.bits - self.config.initial_cardinality
        return (np.asarray(words, dtype=np.uint8) >> shift).astype(np.uint8)

    def insert(self, series_id: int, word) -> Node:
        """Route one full-resolution word to its leaf, splitting on overflow."""
        word = np.asarray(word, dtype=np.uint8)
        prefix = self.root_prefix(word)
        key = prefix.tobytes()
        node = self.roots.get(key)
        if node is None:
            node = Node(prefix, np.full(self.word_length, self.config.initial_cardinality))
            self.roots[key] = node
        while not node.is_leaf:
            node = node.children[node.child_bit(word, self.bits)]
        node.append(series_id, word)
        if node.size > self.config.leaf_capacity:
            # an overflow leaf may have become splittable
            node.overflow = False
            split_leaf(node, self.bits, self.config.leaf_capacity)
        self._flat = None
        return node

    def root_nodes(self) -> list[Node]:
        """Root children ordered by prefix."""
        return [self.roots[k] for k in sorted(self.roots)]

    def iter_nodes(self):
        """Pre-order ``(depth, node)`` pairs; root children have depth 1."""
        for root in self.root_nodes():
            stack = [(1, root)]
            while stack:
                depth, node = stack.pop()
                yield depth, node
                if not node.is_leaf:
                    stack.append((depth + 1, node.children[1]))
                    stack.append((depth + 1, node.children[0]))

    def leaves(self):
        return [node for _, node in self.iter_nodes() if node.is_leaf]

    @property
    def series_count(self) -> int:
        return sum(leaf.size for leaf in self.leaves())

    @property
    def flat(self) -> "FlatView":
        if self._flat is None:
            self._flat = FlatView(self)
        return self._flat

    # serialization ---------------------------------------------------------

    def to_bytes(self) -> bytes:
        blob = self.model.to_bytes()
        out = io.BytesIO()
        out.write(INDEX_MAGIC)
        cfg = self.config
        out.write(struct.pack("<HQBBI", INDEX_VERSION, cfg.leaf_capacity, cfg.initial_cardinality,
                              SUMMARIZERS.index(cfg.summarizer), cfg.worker_count))
        out.write(hashlib.sha256(blob).digest())
        out.write(struct.pack("<Q", len(blob)))
        out.write(blob)
        out.write(self.data_hash)
        out.write(struct.pack("<QQ", self.series_count, len(self.roots)))
        for _, node in self.iter_nodes():
            if node.is_leaf:
                out.write(bytes([_OVERFLOW if node.overflow else _LEAF]))
            else:
                out.write(bytes([_INNER]))
            out.write(node.prefix.tobytes())
            out.write(node.card.tobytes())
            if node.is_leaf:
                out.write(struct.pack("<Q", node.size))
                out.write(node.ids.astype("<i8").tobytes())
                out.write(np.ascontiguousarray(node.words).tobytes())
            else:
                out.write(struct.pack("<H", node.split_position))
        return out.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "IndexTree":
        view = memoryview(data)
        if bytes(view[:8]) != INDEX_MAGIC:
            raise ValueError("not an index snapshot")
        off = 8
        version, cap, init, summ, workers = struct.unpack_from("<HQBBI", data, off)
        if version != INDEX_VERSION:
            raise ValueError(f"unsupported index version {version}")
        off += struct.calcsize("<HQBBI")
        model_hash = bytes(view[off:off + 32])
        off += 32
        (blen,) = struct.unpack_from("<Q", data, off)
        off += 8
        blob = bytes(view[off:off + blen])
        off += blen
        if hashlib.sha256(blob).digest() != model_hash:
            raise ValueError("model hash mismatch in index snapshot")
        model = model_from_bytes(blob)
        tree = cls(model, IndexConfig(cap, init, workers, SUMMARIZERS[summ]))
        tree.data_hash = bytes(view[off:off + 32])
        off += 32
        _, nroots = struct.unpack_from("<QQ", data, off)
        off += 16
        l = model.word_length

        def read_node():
            nonlocal off
            tag = data[off]
            off += 1
            node = Node(np.frombuffer(data, np.uint8, l, off), np.frombuffer(data, np.uint8, l, off + l))
            off += 2 * l
            if tag == _INNER:
                (node.split_position,) = struct.unpack_from("<H", data, off)
                off += 2
                node.children = [read_node(), read_node()]
            else:
                (size,) = struct.unpack_from("<Q", data, off)
                off += 8
                ids = np.frombuffer(data, "<i8", size, off).astype(np.int64)
                off += 8 * size
                words = np.frombuffer(data, np.uint8, size * l, off).reshape(size, l).copy()
                off += size * l
                node.set_payload(ids, words)
                node.overflow = tag == _OVERFLOW
            return node

        for _ in range(nroots):
            node = read_node()
            tree.roots[node.prefix.tobytes()] = node
        if off != len(data):
            raise ValueError("trailing bytes in index snapshot")
        return tree

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "IndexTree":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def insert(tree: IndexTree, series_id: int, word) -> IndexTree:
    tree.insert(series_id, word)
    return tree


def transform_parallel(model: SymbolicModel, values: np.ndarray, workers: int = 1,
                       block: int = 32768) -> np.ndarray:
    """Full-resolution words for every row, computed block-wise on ``workers`` threads."""
    out = np.empty((values.shape[0], model.word_length), dtype=np.uint8)
    starts = range(0, values.shape[0], block)

    def run(s):
        out[s:s + block] = model.transform(values[s:s + block])

    if workers == 1:
        for s in starts:
            run(s)
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, starts))
    return out


def build_index(dataset, model: SymbolicModel, config: IndexConfig | None = None,
                words: np.ndarray | None = None) -> IndexTree:
    """Bulk-load every series of ``dataset``.

    Series are grouped by root prefix and each group is split recursively
    until leaves fit; groups are independent and spread over
    ``config.worker_count`` threads.  The resulting leaves depend only on the
    data, never on the worker count.
    """
    config = config or IndexConfig()
    values = dataset.values if isinstance(dataset, Dataset) else np.asarray(dataset)
    if words is None:
        words = transform_parallel(model, values, config.worker_count)
    tree = IndexTree(model, config)
    if len(words) == 0:
        return tree
    keys = tree.root_prefix(words)
    order = np.lexsort(keys.T[::-1])
    sk = keys[order]
    cuts = np.flatnonzero(np.any(sk[1:] != sk[:-1], axis=1)) + 1
    groups = np.split(order, cuts)
    init_card = np.full(tree.word_length, config.initial_cardinality, dtype=np.uint8)

    def run(ids):
        return _build_subtree(keys[ids[0]], init_card, ids, words[ids], tree.bits, config.leaf_capacity)

    if config.worker_count == 1:
        subtrees = [run(g) for g in groups]
    else:
        with ThreadPoolExecutor(config.worker_count) as pool:
            subtrees = list(pool.map(run, groups))
    for node in subtrees:
        tree.roots[node.prefix.tobytes()] = node
    return tree


def node_lower_bound(query_proj, node: Node, model: SymbolicModel, bsf: float = math.inf) -> float:
    """Squared lower bound between a projected query and a node signature."""
    lower, upper = model.bounds(node.prefix, node.card)
    return chunked_lower_bound(query_proj, lower, upper, model.weights, bsf)


class FlatView:
    """Read-only arrays derived from a tree for vectorized query answering.

    Non-empty leaves are listed in pre-order; ``perm`` concatenates their ids
    so that leaf ``i`` owns ``perm[start[i]:end[i]]``.
    """

    def __init__(self, tree: IndexTree):
        model = tree.model
        self.leaves = []
        root_ranges = []
        self.root_nodes = tree.root_nodes()
        for root in self.root_nodes:
            first = len(self.leaves)
            stack = [root]
            while stack:
                node = stack.pop()
                if node.is_leaf:
                    if node.size:
                        self.leaves.append(node)
                else:
                    stack.append(node.children[1])
                    stack.append(node.children[0])
            root_ranges.append((first, len(self.leaves)))
        l = tree.word_length
        self.root_ranges = np.asarray(root_ranges, dtype=np.int64).reshape(-1, 2)
        # root child owning each leaf, and node identity -> leaf index
        self.leaf_root = np.repeat(np.arange(len(self.root_ranges)),
                                   self.root_ranges[:, 1] - self.root_ranges[:, 0])
        self.position = {id(leaf): i for i, leaf in enumerate(self.leaves)}
        sizes = np.array([leaf.size for leaf in self.leaves], dtype=np.int64)
        self.end = np.cumsum(sizes)
        self.start = self.end - sizes
        if self.leaves:
            self.perm = np.concatenate([leaf.ids for leaf in self.leaves])
            self.words = np.concatenate([leaf.words for leaf in self.leaves])
            lp = np.stack([leaf.prefix for leaf in self.leaves])
            lc = np.stack([leaf.card for leaf in self.leaves])
        else:
            self.perm = np.empty(0, dtype=np.int64)
            self.words = np.empty((0, l), dtype=np.uint8)
            lp = lc = np.empty((0, l), dtype=np.uint8)
        self.leaf_lower, self.leaf_upper = model.bounds(lp, lc)
        if self.root_nodes:
            rp = np.stack([r.prefix for r in self.root_nodes])
            rc = np.stack([r.card for r in self.root_nodes])
        else:
            rp = rc = np.empty((0, l), dtype=np.uint8)
        self.root_lower, self.root_upper = model.bounds(rp, rc)


# --- audits ------------------------------------------------------------------

@dataclass
class AuditReport:
    problems: list = field(default_factory=list)
    leaves: int = 0
    overflow_leaves: int = 0
    series: int = 0

    @property
    def ok(self) -> bool:
        return not self.problems


def audit_tree(tree: IndexTree, expected_ids=None, limit: int = 20) -> AuditReport:
    """Walk the whole tree and check structure, prefix containment, capacity and completeness."""
    rep = AuditReport()
    bits = tree.bits
    init = tree.config.initial_cardinality
    cap = tree.config.leaf_capacity
    seen = []

    def bad(msg):
        if len(rep.problems) < limit:
            rep.problems.append(msg)

    for key, root in tree.roots.items():
        if np.any(root.card != init) or root.prefix.tobytes() != key:
            bad(f"root child {key.hex()} has wrong signature")
    for depth, node in tree.iter_nodes():
        if node.is_leaf:
            rep.leaves += 1
            w = node.words
            if node.size:
                shift = (bits - node.card.astype(np.int64))
                if np.any((w.astype(np.int64) >> shift) != node.prefix):
                    bad(f"leaf at depth {depth} holds words outside its prefix")
            if node.overflow:
                rep.overflow_leaves += 1
                if choose_split_position(w, node.card, bits) is not None:
                    bad("overflow leaf could still be split")
            elif node.size > cap:
                bad(f"leaf holds {node.size} > capacity {cap}")
            seen.append(node.ids)
            continue
        if node.size:
            bad("inner node carries payload")
        if len(node.children) != 2:
            bad("inner node without exactly two children")
            continue
        p = node.split_position
        for b, child in enumerate(node.children):
            want_card = node.card.copy()
            want_card[p] += 1
            want_prefix = node.prefix.copy()
            want_prefix[p] = (int(node.prefix[p]) << 1) | b
            if np.any(child.card != want_card) or np.any(child.prefix != want_prefix):
                bad(f"child {b} of split at position {p} has wrong signature")
    ids = np.sort(np.concatenate(seen)) if seen else np.empty(0, dtype=np.int64)
    rep.series = len(ids)
    if expected_ids is not None:
        exp = np.sort(np.asarray(expected_ids, dtype=np.int64))
        if len(exp) != len(ids) or np.any(exp != ids):
            bad("indexed ids differ from ingested ids")
    elif len(ids) and np.any(ids[1:] == ids[:-1]):
        bad("duplicate series ids")
    return rep


def leaf_content(tree: IndexTree) -> dict:
    """Map leaf signature -> sorted ids; equal across builds with identical content."""
    out = {}
    for _, node in tree.iter_nodes():
        if node.is_leaf and node.size:
            out[node.prefix.tobytes() + node.card.tobytes()] = tuple(np.sort(node.ids).tolist())
    return out


def audit_lbd_chains(tree: IndexTree, values, queries, chains: int = 1000, seed: int = 0,
                     atol: float = 1e-5) -> list[str]:
    """Check lower bounds along random root-to-series chains.

    Each chain picks a query, descends from a random root child through
    random non-empty children to a leaf, then picks one of its series.  Node
    bounds must not decrease going down, the series' word bound must be at
    least its leaf's, and the exact squared distance must be at least the
    word bound (up to ``atol``).  Returns a list of problems.
    """
    from .core import squared_distances

    rng = np.random.default_rng(seed)
    model = tree.model
    roots = [r for r in tree.root_nodes() if not r.is_leaf or r.size]
    if not roots:
        return []
    q = np.atleast_2d(np.asarray(queries, dtype=np.float32))
    proj = model.project(q)
    problems = []
    for _ in range(chains):
        qi = int(rng.integers(len(q)))
        node = roots[int(rng.integers(len(roots)))]
        prev = node_lower_bound(proj[qi], node, model)
        while not node.is_leaf:
            kids = [c for c in node.children if not (c.is_leaf and c.size == 0)]
            node = kids[int(rng.integers(len(kids)))]
            cur = node_lower_bound(proj[qi], node, model)
            if cur < prev:
                problems.append(f"node bound fell from {prev} to {cur} (query {qi})")
            prev = cur
        j = int(rng.integers(node.size))
        lo, hi = model.word_bounds(node.words[j])
        word_lbd = chunked_lower_bound(proj[qi], lo, hi, model.weights)
        if word_lbd < prev:
            problems.append(f"series bound {word_lbd} below leaf bound {prev} (query {qi})")
        ed = float(squared_distances(values[node.ids[j]][None, :], q[qi])[0])
        if word_lbd > ed + atol:
            problems.append(f"series bound {word_lbd} exceeds squared distance {ed} (query {qi})")
    return problems
