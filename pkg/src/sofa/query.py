"""Exact k-NN answering over the tree index, and the parallel scan baseline.

Both paths compute exact distances with :func:`sofa.core.squared_distances`,
so for the same query they produce bitwise identical values; the index only
decides *which* series get their exact distance computed.
"""
from __future__ import annotations

import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import CHUNK, Dataset, abandon_scan, accumulate, chunk_sums, squared_distances, z_normalize
from .index import IndexConfig, IndexTree, build_index, transform_parallel
from .sax import SaxModel
from .sfa import learn_mcb, lower_bounds

# pruning compares LBD against BSF with this slack so float rounding never prunes a true neighbour
_REL_SLACK = 1e-9
_ABS_SLACK = 1e-9
_LEAF_BATCH = 2048
_MAX_BATCH = 8192


def _threshold(bsf: float) -> float:
    return bsf * (1.0 + _REL_SLACK) + _ABS_SLACK


@dataclass
class KnnResult:
    """The ``k`` nearest series, ascending by distance (ties by id)."""

    sq_distances: np.ndarray
    ids: np.ndarray

    @property
    def distances(self) -> np.ndarray:
        return np.sqrt(self.sq_distances)

    def pairs(self) -> list[tuple[float, int]]:
        return [(float(d), int(i)) for d, i in zip(self.distances, self.ids)]

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class QueryStats:
    """Instrumentation for one query.

    ``pruned`` collects ``(lbd, bsf_at_prune)`` for every pruned leaf when
    ``record_pruned`` is set.
    """

    record_pruned: bool = False
    exact_count: int = 0
    lbd_count: int = 0
    leaves_visited: int = 0
    leaves_pruned: int = 0
    pruned: list = field(default_factory=list)
    bsf_trace: list = field(default_factory=list)
    approximate_sq_distance: float = math.inf


def _merge_topk(d1, i1, d2, i2, k):
    d = np.concatenate([d1, d2])
    ids = np.concatenate([i1, i2])
    order = np.lexsort((ids, d))[:k]
    return d[order], ids[order]


class QueryJob:
    """Query state shared by the index workers: the result heap and its BSF."""

    def __init__(self, query, proj, word, k: int, stats: QueryStats | None = None):
        self.query = query
        self.proj = proj
        self.word = word
        self.k = k
        self.stats = stats if stats is not None else QueryStats()
        self.lock = threading.Lock()
        self._d = np.empty(0)
        self._ids = np.empty(0, dtype=np.int64)
        self.bsf = math.inf

    @classmethod
    def create(cls, model, query, k: int, stats=None) -> "QueryJob":
        q = np.asarray(query, dtype=np.float32)
        proj = model.project(q[None, :])[0]
        word = model.quantize(proj[None, :])[0]
        return cls(q, proj, word, k, stats)

    def offer(self, sq, ids) -> None:
        """Merge newly computed exact distances into the top-k."""
        with self.lock:
            self.stats.exact_count += len(ids)
            keep = sq < self.bsf
            if not keep.any():
                return
            self._d, self._ids = _merge_topk(self._d, self._ids, sq[keep], ids[keep], self.k)
            if len(self._d) == self.k and self._d[-1] < self.bsf:
                self.bsf = float(self._d[-1])
                self.stats.bsf_trace.append(self.bsf)

    def result(self) -> KnnResult:
        return KnnResult(self._d.copy(), self._ids.copy())


def euclidean_early_abandon(a, b, bsf: float = math.inf) -> float:
    """Squared distance, summed in chunks of 8; stops once the total reaches ``bsf``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return abandon_scan(chunk_sums((diff * diff)[None, :])[0], bsf)


def _verify_candidates(job: QueryJob, values, ids, lbd) -> None:
    """Exact distances for candidates whose lower bound beats the BSF.

    Candidates go in ascending LBD order, in growing batches, re-reading the
    BSF before each batch; the first batch whose smallest LBD reaches the BSF
    ends the scan.
    """
    live = lbd < _threshold(job.bsf)
    if not live.any():
        return
    ids = ids[live]
    lbd = lbd[live]
    order = np.argsort(lbd, kind="stable")
    ids = ids[order]
    lbd = lbd[order]
    i = 0
    batch = max(16, job.k)
    while i < len(ids):
        thr = _threshold(job.bsf)
        cl = lbd[i:i + batch]
        n_ok = int(np.searchsorted(cl, thr, side="left"))
        if n_ok == 0:
            break
        chunk = ids[i:i + n_ok]
        job.offer(squared_distances(values[chunk], job.query), chunk)
        if n_ok < len(cl):
            break
        i += batch
        batch = min(2 * batch, _MAX_BATCH)


def _leaf_series(flat, leaf_indices):
    leaf_indices = np.asarray(leaf_indices, dtype=np.int64)
    if len(leaf_indices) == 1:
        j = leaf_indices[0]
        sl = slice(flat.start[j], flat.end[j])
        return flat.perm[sl], flat.words[sl]
    sizes = flat.end[leaf_indices] - flat.start[leaf_indices]
    # positions start[j] .. end[j]-1 for every leaf, without a Python loop
    offsets = np.repeat(flat.start[leaf_indices] - (np.cumsum(sizes) - sizes), sizes)
    idx = offsets + np.arange(int(sizes.sum()))
    return flat.perm[idx], flat.words[idx]


def _scan_leaves(job: QueryJob, tree: IndexTree, values, leaf_indices) -> None:
    ids, words = _leaf_series(tree.flat, leaf_indices)
    model = tree.model
    lower, upper = model.word_bounds(words)
    lbd = lower_bounds(job.proj, lower, upper, model.weights)
    with job.lock:
        job.stats.lbd_count += len(ids)
        job.stats.leaves_visited += len(leaf_indices)
    _verify_candidates(job, values, ids, lbd)


def approximate_search(tree: IndexTree, job: QueryJob, values) -> int:
    """Descend to the leaf matching the query word and seed the BSF from it.

    Falls back to the root child with the smallest lower bound when the
    query's own root prefix is absent.  Returns the flat index of the leaf
    used (-1 for an empty tree).
    """
    flat = tree.flat
    if not flat.leaves:
        return -1
    node = tree.roots.get(tree.root_prefix(job.word).tobytes())
    if node is None:
        rl = lower_bounds(job.proj, flat.root_lower, flat.root_upper, tree.model.weights)
        sizes = flat.root_ranges[:, 1] - flat.root_ranges[:, 0]
        rl = np.where(sizes > 0, rl, np.inf)
        node = flat.root_nodes[int(np.argmin(rl))]
    while not node.is_leaf:
        b = node.child_bit(job.word, tree.bits)
        child = node.children[b]
        if child.is_leaf and child.size == 0:
            child = node.children[1 - b]
        node = child
    leaf_index = flat.position.get(id(node), -1)
    if leaf_index >= 0:
        _scan_leaves(job, tree, values, [leaf_index])
    job.stats.approximate_sq_distance = job.bsf
    return leaf_index


class LeafQueue:
    """Leaves ordered by lower bound.

    All entries are known up front, so a sorted array with a read cursor
    pops in the same order a heap would.
    """

    def __init__(self, lbd, leaves, sizes):
        order = np.argsort(lbd, kind="stable")
        self.lbd = lbd[order]
        self.leaves = leaves[order]
        self.cum = np.concatenate([[0], np.cumsum(sizes[self.leaves])])
        self.pos = 0

    def __len__(self) -> int:
        return len(self.lbd) - self.pos

    def head(self) -> float:
        return float(self.lbd[self.pos])

    def pop_batch(self, thr: float, budget: int) -> np.ndarray:
        """Leaves from the head with bound below ``thr``, about ``budget`` series in all (at least one)."""
        i = self.pos
        j = i + int(np.searchsorted(self.lbd[i:], thr, side="left"))
        j = min(j, max(i + 1, int(np.searchsorted(self.cum, self.cum[i] + budget, side="right")) - 1))
        self.pos = j
        return self.leaves[i:j]

    def drain(self):
        rest = self.lbd[self.pos:]
        self.pos = len(self.lbd)
        return rest


def exact_knn(tree: IndexTree, dataset, query, k: int, workers: int = 1,
              stats: QueryStats | None = None) -> KnnResult:
    """Exact k nearest neighbours of a z-normalized query.

    After the approximate descent seeds the BSF, root children and then
    leaves whose lower bound reaches the BSF are pruned; the rest are spread
    round-robin over ``workers`` priority queues ordered by lower bound.  A
    worker abandons a queue once its head reaches the BSF and moves to the
    next non-empty queue.
    """
    values = dataset.values if isinstance(dataset, Dataset) else np.asarray(dataset)
    flat = tree.flat
    N = len(flat.perm)
    if k < 1 or k > N:
        raise ValueError(f"k={k} must be in 1..{N}")
    model = tree.model
    job = QueryJob.create(model, query, k, stats)
    st = job.stats
    seed_leaf = approximate_search(tree, job, values)
    w = model.weights

    bsf = job.bsf
    thr = _threshold(bsf)
    rl = lower_bounds(job.proj, flat.root_lower, flat.root_upper, w)
    root_live = rl < thr
    leaf_root_lbd = rl[flat.leaf_root]
    cand = np.flatnonzero(root_live[flat.leaf_root])
    dead = np.flatnonzero(~root_live[flat.leaf_root])
    st.leaves_pruned += len(dead)
    if st.record_pruned:
        st.pruned.extend(zip(leaf_root_lbd[dead].tolist(), [bsf] * len(dead)))
    cand = cand[cand != seed_leaf]
    ll = lower_bounds(job.proj, flat.leaf_lower[cand], flat.leaf_upper[cand], w) if len(cand) else np.empty(0)
    keep = ll < thr
    st.leaves_pruned += int((~keep).sum())
    if st.record_pruned:
        st.pruned.extend(zip(ll[~keep].tolist(), [bsf] * int((~keep).sum())))

    sizes = flat.end - flat.start
    ll, cand = ll[keep], cand[keep]
    queues = [LeafQueue(ll[q::workers], cand[q::workers], sizes) for q in range(workers)]
    qlock = threading.Lock()

    def next_batch(qi):
        """Pop a batch of leaves for the worker currently on queue ``qi``."""
        with qlock:
            for step in range(workers):
                q = (qi + step) % workers
                qu = queues[q]
                cur = job.bsf
                if len(qu) and qu.head() >= _threshold(cur):
                    # everything left in this queue is at least as far
                    rest = qu.drain()
                    st.leaves_pruned += len(rest)
                    if st.record_pruned:
                        st.pruned.extend(zip(rest.tolist(), [cur] * len(rest)))
                if not len(qu):
                    continue
                return q, qu.pop_batch(_threshold(cur), _LEAF_BATCH)
            return qi, ()

    def work(qi):
        while True:
            qi, batch = next_batch(qi)
            if not len(batch):
                return
            _scan_leaves(job, tree, values, batch)

    if workers == 1:
        work(0)
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(work, range(workers)))
    return job.result()


def _scan_block(rows, q, bsf: float):
    """Squared distances for a block, abandoning rows whose leading chunks reach ``bsf``.

    Returns ``(positions, distances)`` of rows whose full distance is below ``bsf``.
    """
    m, n = rows.shape
    diff = rows - q  # float32 rows promote exactly to float64
    nchunks = -(-n // CHUNK)
    head = min(n, CHUNK * max(1, nchunks // 4))
    hsums = chunk_sums(diff[:, :head] ** 2)
    if math.isfinite(bsf) and head < n:
        alive = np.flatnonzero(accumulate(hsums) < bsf)
        rest = chunk_sums(diff[alive, head:] ** 2)
        d = accumulate(np.concatenate([hsums[alive], rest], axis=1))
    elif head < n:
        alive = np.arange(m)
        d = accumulate(np.concatenate([hsums, chunk_sums(diff[:, head:] ** 2)], axis=1))
    else:
        alive = np.arange(m)
        d = accumulate(hsums)
    ok = d < bsf
    return alive[ok], d[ok]


def parallel_scan_knn(dataset, query, k: int, workers: int = 1, block: int = 8192,
                      stats: QueryStats | None = None) -> KnnResult:
    """Exact k-NN by scanning contiguous segments of the data on ``workers`` threads.

    Each worker keeps its own top-k and abandons rows early against its own
    k-th distance; partial results are merged once at the end.
    """
    values = dataset.values if isinstance(dataset, Dataset) else np.asarray(dataset)
    N = values.shape[0]
    if k < 1 or k > N:
        raise ValueError(f"k={k} must be in 1..{N}")
    q = np.asarray(query, dtype=np.float32).astype(np.float64)
    bounds = np.linspace(0, N, workers + 1).astype(np.int64)

    def run(w):
        lo, hi = bounds[w], bounds[w + 1]
        bd, bi = np.empty(0), np.empty(0, dtype=np.int64)
        for s in range(lo, hi, block):
            e = min(s + block, hi)
            bsf = bd[-1] if len(bd) == k else math.inf
            pos, d = _scan_block(values[s:e], q, bsf)
            if len(pos):
                bd, bi = _merge_topk(bd, bi, d, pos + s, k)
        return bd, bi

    if workers == 1:
        parts = [run(0)]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, range(workers)))
    d = np.concatenate([p[0] for p in parts])
    ids = np.concatenate([p[1] for p in parts])
    order = np.lexsort((ids, d))[:k]
    if stats is not None:
        stats.exact_count += N
    return KnnResult(d[order], ids[order])


# --- engines -------------------------------------------------------------------

def normalize_query(raw) -> np.ndarray:
    """z-normalize a raw query and store it like ingested series (float32)."""
    return z_normalize(raw)[0].astype(np.float32)


@dataclass
class BuildTimes:
    learn: float = 0.0
    transform: float = 0.0
    build: float = 0.0

    @property
    def total(self) -> float:
        return self.learn + self.transform + self.build


class TreeEngine:
    """Index-backed exact k-NN over one dataset (SFA or SAX summaries)."""

    def __init__(self, tree: IndexTree, dataset: Dataset, times: BuildTimes | None = None):
        self.tree = tree
        self.dataset = dataset
        self.times = times or BuildTimes()

    @property
    def model(self):
        return self.tree.model

    @classmethod
    def build(cls, dataset: Dataset, summarizer: str = "sfa", l: int = 16, alphabet: int = 256,
              sample: float = 0.01, binning: str = "ew", leaf_capacity: int = 20000,
              workers: int = 1, seed: int = 0, initial_cardinality: int = 1,
              candidate_limit: int = 16) -> "TreeEngine":
        times = BuildTimes()
        t0 = time.perf_counter()
        if summarizer == "sfa":
            model = learn_mcb(dataset, l, alphabet, sample, binning, seed, candidate_limit)
        elif summarizer == "sax":
            model = SaxModel(dataset.series_length, l, alphabet)
        else:
            raise ValueError(f"unknown summarizer {summarizer!r}")
        t1 = time.perf_counter()
        words = transform_parallel(model, dataset.values, workers)
        t2 = time.perf_counter()
        config = IndexConfig(leaf_capacity, initial_cardinality, workers, summarizer)
        tree = build_index(dataset, model, config, words=words)
        tree.flat  # noqa: B018 - materialize the query view as part of the build
        t3 = time.perf_counter()
        times.learn, times.transform, times.build = t1 - t0, t2 - t1, t3 - t2
        return cls(tree, dataset, times)

    def knn(self, query, k: int, workers: int | None = None, stats: QueryStats | None = None) -> KnnResult:
        w = self.tree.config.worker_count if workers is None else workers
        return exact_knn(self.tree, self.dataset, query, k, w, stats)


class ScanEngine:
    """Brute-force parallel scan; never prunes."""

    def __init__(self, dataset: Dataset, workers: int = 1):
        self.dataset = dataset
        self.workers = workers

    def knn(self, query, k: int, workers: int | None = None, stats: QueryStats | None = None) -> KnnResult:
        w = self.workers if workers is None else workers
        return parallel_scan_knn(self.dataset, query, k, w, stats=stats)
