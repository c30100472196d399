"""Tightness of lower bound, pruning power, timings and index shape statistics."""
from __future__ import annotations

import csv
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, squared_distances
from .index import IndexTree
from .query import BuildTimes, QueryStats, normalize_query
from .sax import SaxModel
from .sfa import learn_mcb, lower_bounds
from .spectral import SelectedIndices, SpectrumLayout, real_dft, select_by_variance

TLB_METHODS = ("sfa-ew", "sfa-ed", "isax", "sfa-ew-first", "sfa-ed-first", "dft")
DEFAULT_ALPHABETS = (4, 8, 16, 32, 64, 128, 256)
TLB_HEADER = ("dataset", "method", "alphabet", "l", "pairs", "mean_tlb")
BENCH_HEADER = ("engine", "query_idx", "k", "time_ms", "exact_distances", "pruned_fraction")


class DftSummary:
    """Unquantized spectral summary: the selected DFT values themselves.

    Its lower bound is the weighted distance over the selected positions.
    """

    def __init__(self, n: int, selected: SelectedIndices):
        self.n = n
        self.selected = selected

    @classmethod
    def learn(cls, values, l: int, candidate_limit: int = 16) -> "DftSummary":
        n = values.shape[1]
        spectra = real_dft(values)[:, :SpectrumLayout(n, candidate_limit).positions]
        return cls(n, select_by_variance(spectra, l, n=n))

    @property
    def weights(self) -> np.ndarray:
        return self.selected.weights

    def project(self, series) -> np.ndarray:
        return real_dft(series)[..., self.selected.indices]

    def summary_bounds(self, values):
        p = self.project(values)
        return p, p


def make_summarizer(method: str, values, l: int = 16, a: int = 256, sample: float = 1.0,
                    seed: int = 0, candidate_limit: int = 16):
    """Build the summarizer named by ``method`` from ``values`` (normalized rows)."""
    if method == "isax":
        return SaxModel(values.shape[1], l, a)
    if method == "dft":
        return DftSummary.learn(values, l, candidate_limit)
    if method.startswith("sfa-"):
        parts = method.split("-")
        binning = parts[1]
        selection = "first" if parts[-1] == "first" else "variance"
        if binning not in ("ew", "ed") or len(parts) > 3:
            raise ValueError(f"unknown method {method!r}")
        return learn_mcb(values, l, a, sample, binning, seed, candidate_limit, selection)
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(TLB_METHODS)}")


def _bounds_of(summarizer, values):
    if isinstance(summarizer, DftSummary):
        return summarizer.summary_bounds(values)
    return summarizer.word_bounds(summarizer.transform(values))


def sample_pairs(series_count: int, pair_budget: int = 1000, seed: int = 0) -> np.ndarray:
    """Sorted ids of up to ``pair_budget`` series, drawn uniformly without replacement."""
    if series_count <= pair_budget:
        return np.arange(series_count)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(series_count, size=pair_budget, replace=False))


def tlb_ratios(summarizer, values, queries, ids=None, workers: int = 1) -> np.ndarray:
    """All ``LBD / ED`` ratios (unsquared) for queries x ``values[ids]``; ED=0 pairs dropped."""
    X = np.asarray(values)[ids] if ids is not None else np.asarray(values)
    Q = np.atleast_2d(np.asarray(queries, dtype=np.float32))
    lower, upper = _bounds_of(summarizer, X)
    qproj = summarizer.project(Q)

    def one(i):
        lbd = lower_bounds(qproj[i], lower, upper, summarizer.weights)
        ed = squared_distances(X, Q[i])
        ok = ed > 0
        return np.sqrt(lbd[ok]) / np.sqrt(ed[ok])

    if workers == 1:
        parts = [one(i) for i in range(len(Q))]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(one, range(len(Q))))
    return np.concatenate(parts) if parts else np.empty(0)


def tlb(summarizer, dataset, queries, pair_budget: int = 1000, seed: int = 0, workers: int = 1) -> float:
    """Mean tightness of lower bound over all queries x sampled series."""
    values = dataset.values if isinstance(dataset, Dataset) else np.asarray(dataset)
    r = tlb_ratios(summarizer, values, queries, sample_pairs(len(values), pair_budget, seed), workers)
    if r.size == 0:
        raise ValueError("no (query, series) pairs with nonzero distance")
    return float(r.mean())


@dataclass
class TlbReport:
    dataset: str
    l: int
    rows: list = field(default_factory=list)  # (method, alphabet, pairs, mean_tlb)

    def value(self, method: str, alphabet: int) -> float:
        for m, a, _, v in self.rows:
            if m == method and a == alphabet:
                return v
        raise KeyError((method, alphabet))

    def series(self, method: str) -> list[float]:
        return [v for m, _, _, v in sorted(self.rows, key=lambda r: r[1]) if m == method]

    def max_value(self) -> float:
        return max(v for *_, v in self.rows)

    def csv_rows(self):
        for m, a, p, v in self.rows:
            yield (self.dataset, m, a, self.l, p, f"{v:.6f}")

    def table(self) -> str:
        methods = list(dict.fromkeys(r[0] for r in self.rows))
        alphas = sorted({r[1] for r in self.rows})
        head = f"{'method':<14}" + "".join(f"{a:>8}" for a in alphas)
        lines = [f"TLB  dataset={self.dataset}  l={self.l}", head]
        for m in methods:
            cells = []
            for a in alphas:
                try:
                    cells.append(f"{self.value(m, a):8.3f}")
                except KeyError:
                    cells.append(f"{'-':>8}")
            lines.append(f"{m:<14}" + "".join(cells))
        return "\n".join(lines)


def tlb_grid(dataset, queries, methods=("sfa-ew", "sfa-ed", "isax"), alphabets=DEFAULT_ALPHABETS,
             l: int = 16, sample: float = 1.0, pair_budget: int = 1000, seed: int = 0,
             name: str = "", workers: int = 1) -> TlbReport:
    """TLB for every (method, alphabet) combination, on the same sampled pairs."""
    values = dataset.values if isinstance(dataset, Dataset) else np.asarray(dataset)
    ids = sample_pairs(len(values), pair_budget, seed)
    rep = TlbReport(name, l)
    for method in methods:
        if method not in TLB_METHODS:
            raise ValueError(f"unknown method {method!r}; choose from {', '.join(TLB_METHODS)}")
        for a in alphabets:
            s = make_summarizer(method, values, l, a, sample, seed)
            r = tlb_ratios(s, values, queries, ids, workers)
            if r.size == 0:
                raise ValueError("no (query, series) pairs with nonzero distance")
            rep.rows.append((method, int(a), int(r.size), float(r.mean())))
    return rep


def write_tlb_csv(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TLB_HEADER)
        for rep in reports:
            w.writerows(rep.csv_rows())


# --- pruning and timing ------------------------------------------------------------

def pruning_power(engine, queries, k: int = 1, workers: int | None = None) -> float:
    """Mean fraction of series whose exact distance is not computed."""
    return float(np.mean(pruning_fractions(engine, queries, k, workers)))


def pruning_fractions(engine, queries, k: int = 1, workers: int | None = None) -> np.ndarray:
    N = engine.dataset.series_count
    out = []
    for q in np.atleast_2d(queries):
        st = QueryStats()
        engine.knn(q, k, workers, stats=st)
        out.append(1.0 - min(st.exact_count, N) / N)
    return np.asarray(out)


@dataclass
class IndexStats:
    leaf_depths: np.ndarray
    fill: np.ndarray
    root_fanout: int
    overflow_leaves: int
    series: int

    @property
    def depth_histogram(self) -> dict:
        d, c = np.unique(self.leaf_depths, return_counts=True)
        return dict(zip(d.tolist(), c.tolist()))

    @property
    def max_depth(self) -> int:
        return int(self.leaf_depths.max()) if len(self.leaf_depths) else 0

    def summary(self) -> str:
        return (f"leaves={len(self.fill)} overflow={self.overflow_leaves} root_fanout={self.root_fanout} "
                f"max_depth={self.max_depth} mean_fill={self.fill.mean() if len(self.fill) else 0:.3f} "
                f"series={self.series}")


def index_stats(tree: IndexTree) -> IndexStats:
    """Depth of every leaf, leaf fill ratios (size / capacity) and root fanout."""
    cap = tree.config.leaf_capacity
    depths, fill, over, total = [], [], 0, 0
    for depth, node in tree.iter_nodes():
        if node.is_leaf:
            depths.append(depth)
            fill.append(node.size / cap)
            over += bool(node.overflow)
            total += node.size
    return IndexStats(np.asarray(depths, dtype=np.int64), np.asarray(fill), len(tree.roots), over, total)


@dataclass
class BenchReport:
    engine: str
    k: int
    times_ms: list = field(default_factory=list)
    exact_counts: list = field(default_factory=list)
    series_count: int = 0
    build: BuildTimes | None = None
    stats: IndexStats | None = None

    @property
    def mean_ms(self) -> float:
        return statistics.fmean(self.times_ms)

    @property
    def median_ms(self) -> float:
        return statistics.median(self.times_ms)

    @property
    def mean_exact(self) -> float:
        return statistics.fmean(self.exact_counts)

    def csv_rows(self):
        for i, (t, c) in enumerate(zip(self.times_ms, self.exact_counts)):
            yield (self.engine, i, self.k, f"{t:.3f}", c, f"{1 - c / self.series_count:.6f}")

    def summary(self) -> str:
        s = (f"{self.engine}: k={self.k} median={self.median_ms:.2f} ms mean={self.mean_ms:.2f} ms "
             f"exact/query={self.mean_exact:.0f} of {self.series_count}")
        if self.build is not None:
            b = self.build
            s += f" build(learn={b.learn:.2f}s transform={b.transform:.2f}s build={b.build:.2f}s)"
        return s


def bench(engine, queries, k: int = 1, workers: int | None = None, name: str = "") -> BenchReport:
    """Time each query individually on a monotonic clock."""
    rep = BenchReport(name or type(engine).__name__, k, series_count=engine.dataset.series_count,
                      build=getattr(engine, "times", None))
    tree = getattr(engine, "tree", None)
    if tree is not None:
        rep.stats = index_stats(tree)
    for q in np.atleast_2d(queries):
        st = QueryStats()
        t0 = time.perf_counter()
        engine.knn(q, k, workers, stats=st)
        rep.times_ms.append(1e3 * (time.perf_counter() - t0))
        rep.exact_counts.append(st.exact_count)
    return rep


def write_bench_csv(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BENCH_HEADER)
        for rep in reports:
            w.writerows(rep.csv_rows())


# --- UCR archive -------------------------------------------------------------------

def ucr_datasets(root) -> list[str]:
    """Names of dataset folders under a UCR archive root that have train and test files."""
    if not root or not os.path.isdir(root):
        return []
    out = []
    for name in sorted(os.listdir(root)):
        d = os.path.join(root, name)
        if os.path.isfile(os.path.join(d, f"{name}_TRAIN.tsv")) and os.path.isfile(os.path.join(d, f"{name}_TEST.tsv")):
            out.append(name)
    return out


def load_ucr(root, name: str):
    """Return z-normalized ``(train, test)`` series of one archive dataset (labels dropped).

    Raises ValueError for variable-length datasets (NaN padding).
    """
    parts = []
    for split in ("TRAIN", "TEST"):
        raw = np.loadtxt(os.path.join(root, name, f"{name}_{split}.tsv"), delimiter="\t", ndmin=2)[:, 1:]
        if np.isnan(raw).any():
            raise ValueError(f"{name} has variable-length series")
        parts.append(Dataset.from_raw(raw))
    return parts[0], parts[1]


def normalize_queries(raw) -> np.ndarray:
    return np.stack([normalize_query(r) for r in np.atleast_2d(raw)])
