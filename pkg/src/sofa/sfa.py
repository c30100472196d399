"""Symbolic Fourier Approximation: learned binning, word encoding and the lower bound.

Words are stored at full resolution (``log2(alphabet)`` bits per symbol).  A
word at cardinality ``c`` keeps the top ``c`` bits of each symbol; its
interval is the union of the merged full-resolution bins, so the bounds of
any reduced word are read straight off the full breakpoint row.
"""
from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .core import Dataset, abandon_scan, accumulate, chunk_sums
from .spectral import DEFAULT_CANDIDATE_LIMIT, SelectedIndices, SpectrumLayout, real_dft, select_by_variance

log = logging.getLogger(__name__)

MAX_BITS = 8
MODEL_MAGIC = b"SOFAMDL\x00"
MODEL_VERSION = 1
TAG_SFA = 1
TAG_SAX = 2
BINNING_CODES = {"ew": 0, "ed": 1, "gaussian": 2}


class DegenerateDimensionError(ValueError):
    """A sample dimension has no spread, so it cannot be binned."""


@dataclass(frozen=True)
class SfaWord:
    """``l`` symbols, each valid at its own cardinality (bits in use)."""

    symbols: np.ndarray
    cardinality: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.symbols, dtype=np.uint8)
        c = np.broadcast_to(np.asarray(self.cardinality, dtype=np.uint8), s.shape).copy()
        if np.any(c < 1) or np.any(c > MAX_BITS):
            raise ValueError("cardinality must be in 1..8 bits")
        if np.any(s.astype(np.int64) >= (1 << c.astype(np.int64))):
            raise ValueError("symbol does not fit its cardinality")
        object.__setattr__(self, "symbols", s)
        object.__setattr__(self, "cardinality", c)

    def __len__(self) -> int:
        return len(self.symbols)

    def truncate(self, bits) -> "SfaWord":
        """Keep the top ``bits`` bits of every symbol (scalar or per position)."""
        b = np.broadcast_to(np.asarray(bits, dtype=np.int64), self.symbols.shape)
        if np.any(b > self.cardinality):
            raise ValueError("cannot raise cardinality by truncation")
        shift = self.cardinality.astype(np.int64) - b
        return SfaWord((self.symbols.astype(np.int64) >> shift).astype(np.uint8), b)


# --- binning ---------------------------------------------------------------

def equi_width_bins(values, a: int) -> np.ndarray:
    """``a - 1`` equally spaced breakpoints between the sample min and max."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise ValueError("need at least two sample values")
    lo, hi = float(v.min()), float(v.max())
    if not lo < hi:
        raise DegenerateDimensionError("all sample values are equal")
    return lo + (hi - lo) * (np.arange(1, a) / a)


def equi_depth_bins(values, a: int, return_nudged: bool = False):
    """Breakpoints at sorted-sample ranks ``ceil(i * S / a)``, ``i = 1..a-1``.

    Repeated sample values can make breakpoints collide; those are pushed up
    to the next representable float so each row stays strictly increasing.
    """
    v = np.sort(np.asarray(values, dtype=np.float64))
    S = v.size
    if S < a:
        raise ValueError(f"sample of {S} values is smaller than alphabet {a}")
    ranks = -(-np.arange(1, a) * S // a)
    bp = v[ranks].copy()
    nudged = False
    for j in range(1, len(bp)):
        if bp[j] <= bp[j - 1]:
            bp[j] = np.nextafter(bp[j - 1], np.inf)
            nudged = True
    if nudged:
        log.debug("equi-depth breakpoints collapsed on duplicates; nudged")
    return (bp, nudged) if return_nudged else bp


# --- lower-bound kernel ----------------------------------------------------

def mind_terms(values, lower, upper) -> np.ndarray:
    """Per-position distance from ``values`` to the intervals ``[lower, upper)``.

    Evaluated with LOWER / UPPER / ZERO masks instead of branches; infinite
    outer bounds are masked out.
    """
    v = np.asarray(values, dtype=np.float64)
    below = v < lower
    above = v > upper
    # ZERO mask is ~(below | above): contributes nothing
    return np.where(below, lower - v, 0.0) + np.where(above, v - upper, 0.0)


def lower_bounds(values, lower, upper, weights) -> np.ndarray:
    """Weighted squared lower bounds of one projected query against many intervals.

    ``values`` is ``(l,)``; ``lower``/``upper`` are ``(m, l)``.  Accumulation
    follows the shared chunked order, so results equal the single-word kernel.
    """
    d = np.atleast_2d(mind_terms(values, lower, upper))
    return accumulate(chunk_sums(np.asarray(weights) * (d * d)))


def chunked_lower_bound(values, lower, upper, weights, bsf: float = math.inf) -> float:
    """Single-word lower bound with chunk-level early abandoning."""
    d = mind_terms(values, lower, upper)
    chunks = chunk_sums((np.asarray(weights) * (d * d))[None, :])[0]
    return abandon_scan(chunks, bsf)


def mind(value: float, symbol: int, row, cardinality: int | None = None) -> float:
    """Distance from ``value`` to ``symbol``'s interval in one breakpoint row.

    ``row`` holds the full-resolution breakpoints; at a reduced cardinality
    the interval spans the merged bins.
    """
    row = np.asarray(row, dtype=np.float64)
    bits = int(round(math.log2(len(row) + 1)))
    c = bits if cardinality is None else int(cardinality)
    shift = bits - c
    lo_i = int(symbol) << shift
    hi_i = (int(symbol) + 1) << shift
    lower = -math.inf if lo_i == 0 else row[lo_i - 1]
    upper = math.inf if hi_i > len(row) else row[hi_i - 1]
    if value < lower:
        return float(lower - value)
    if value > upper:
        return float(value - upper)
    return 0.0


# --- models ----------------------------------------------------------------

class SymbolicModel:
    """Shared machinery for per-dimension quantization into symbolic words.

    Subclasses provide :meth:`project` (series -> ``l`` reals), the weights
    used in the lower bound, and the ``breakpoints`` matrix ``(l, a - 1)``.
    """

    type_tag = 0
    binning = "gaussian"
    n: int
    breakpoints: np.ndarray

    @property
    def word_length(self) -> int:
        return self.breakpoints.shape[0]

    @property
    def alphabet_size(self) -> int:
        return self.breakpoints.shape[1] + 1

    @property
    def bits(self) -> int:
        return int(round(math.log2(self.alphabet_size)))

    @property
    def weights(self) -> np.ndarray:
        raise NotImplementedError

    def project(self, series) -> np.ndarray:
        raise NotImplementedError

    def _check_alphabet(self):
        a = self.alphabet_size
        if a < 2 or a > 256 or a & (a - 1):
            raise ValueError(f"alphabet size must be a power of two in 2..256, got {a}")
        if np.any(np.diff(self.breakpoints, axis=1) <= 0):
            raise ValueError("breakpoint rows must be strictly increasing")

    @cached_property
    def _ext_flat(self) -> np.ndarray:
        l = self.word_length
        ext = np.empty((l, self.alphabet_size + 1))
        ext[:, 0] = -np.inf
        ext[:, -1] = np.inf
        ext[:, 1:-1] = self.breakpoints
        return ext.ravel()

    @cached_property
    def _row_offsets(self) -> np.ndarray:
        return np.arange(self.word_length, dtype=np.int64) * (self.alphabet_size + 1)

    def quantize(self, values) -> np.ndarray:
        """Symbol ``j`` = number of breakpoints in row ``j`` that are ``<= value``."""
        v = np.atleast_2d(np.asarray(values, dtype=np.float64))
        out = np.empty(v.shape, dtype=np.uint8)
        for j in range(self.word_length):
            out[:, j] = np.searchsorted(self.breakpoints[j], v[:, j], side="right")
        return out

    def transform(self, series, block: int = 65536) -> np.ndarray:
        """Full-resolution words for one series ``(l,)`` or many ``(m, l)``."""
        x = np.asarray(series)
        if x.ndim == 1:
            return self.quantize(self.project(x[None, :]))[0]
        out = np.empty((x.shape[0], self.word_length), dtype=np.uint8)
        for s in range(0, x.shape[0], block):
            out[s:s + block] = self.quantize(self.project(x[s:s + block]))
        return out

    def bounds(self, prefix, card):
        """Interval bounds ``(lower, upper)`` of prefixes at the given cardinalities."""
        p = np.asarray(prefix, dtype=np.int64)
        shift = self.bits - np.asarray(card, dtype=np.int64)
        lo = (p << shift) + self._row_offsets
        hi = ((p + 1) << shift) + self._row_offsets
        return self._ext_flat[lo], self._ext_flat[hi]

    def word_bounds(self, words):
        """Bounds of full-resolution words ``(..., l)``."""
        w = np.asarray(words, dtype=np.int64) + self._row_offsets
        return self._ext_flat[w], self._ext_flat[w + 1]

    def lower_bound(self, query_proj, word: SfaWord, weights=None, bsf: float = math.inf) -> float:
        lower, upper = self.bounds(word.symbols, word.cardinality)
        w = self.weights if weights is None else weights
        return chunked_lower_bound(query_proj, lower, upper, w, bsf)

    def full_word(self, symbols) -> SfaWord:
        return SfaWord(symbols, np.full(self.word_length, self.bits, dtype=np.uint8))

    # serialization ---------------------------------------------------------

    def _extra_fields(self) -> tuple[np.ndarray, int]:
        """Return (per-position integer field, candidate limit) for the envelope."""
        raise NotImplementedError

    def to_bytes(self) -> bytes:
        ints, climit = self._extra_fields()
        head = MODEL_MAGIC + struct.pack(
            "<HBBIIII", MODEL_VERSION, self.type_tag, BINNING_CODES[self.binning],
            self.n, self.word_length, self.alphabet_size, climit,
        )
        return b"".join([
            head,
            np.asarray(ints, dtype="<i8").tobytes(),
            np.asarray(self.weights, dtype="<f8").tobytes(),
            np.asarray(self.breakpoints, dtype="<f8").tobytes(),
        ])


@dataclass(frozen=True, eq=False)
class QuantizationModel(SymbolicModel):
    """Learned SFA quantization: selected DFT positions plus one breakpoint row each."""

    n: int
    breakpoints: np.ndarray
    selected: SelectedIndices
    binning: str = "ew"
    candidate_limit: int = DEFAULT_CANDIDATE_LIMIT
    nudged: tuple = field(default=(), compare=False)

    type_tag = TAG_SFA

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=np.float64)
        object.__setattr__(self, "breakpoints", bp)
        if bp.ndim != 2 or bp.shape[0] != len(self.selected):
            raise ValueError("need one breakpoint row per selected position")
        if self.binning not in ("ew", "ed"):
            raise ValueError(f"unknown binning mode {self.binning!r}")
        self._check_alphabet()

    @property
    def weights(self) -> np.ndarray:
        return self.selected.weights

    def project(self, series) -> np.ndarray:
        x = np.asarray(series)
        if x.shape[-1] != self.n:
            raise ValueError(f"series length {x.shape[-1]} != model length {self.n}")
        return real_dft(x)[..., self.selected.indices]

    def _extra_fields(self):
        return self.selected.indices, self.candidate_limit


def learn_mcb(dataset, l: int = 16, a: int = 256, sampling_ratio: float = 0.01,
              binning: str = "ew", seed: int = 0,
              candidate_limit: int = DEFAULT_CANDIDATE_LIMIT,
              selection: str = "variance") -> QuantizationModel:
    """Learn SFA bins from a sample of the dataset (multiple coefficient binning).

    Steps: draw ``ceil(r * N)`` series without replacement (all of them when
    ``r >= 1``), DFT them, keep the ``l`` highest-variance real/imaginary
    values among the first ``candidate_limit`` coefficients, and bin each kept
    value over the sample.  Positions whose sample values are all equal are
    skipped during selection.

    ``selection="first"`` keeps the first ``l`` non-DC values instead (the
    classic low-pass choice), for ablation runs.
    """
    X = dataset.values if isinstance(dataset, Dataset) else np.asarray(dataset)
    N, n = X.shape
    m = N if sampling_ratio >= 1.0 else math.ceil(sampling_ratio * N)
    if m < max(a, 2):
        raise ValueError(f"sample of {m} series is too small for alphabet {a}")
    if m == N:
        sample = X
    else:
        rng = np.random.default_rng(seed)
        sample = X[np.sort(rng.choice(N, size=m, replace=False))]

    layout = SpectrumLayout(n, candidate_limit)
    spectra = real_dft(sample)[:, :layout.positions]
    spread = spectra.max(axis=0) > spectra.min(axis=0)
    if selection == "variance":
        sel = select_by_variance(spectra, l, n=n, eligible=spread)
    elif selection == "first":
        cand = [p for p in range(2, layout.positions) if spread[p]]
        if len(cand) < l:
            raise ValueError(f"cannot select {l} positions from {len(cand)} available")
        sel = SelectedIndices.for_positions(cand[:l], n)
    else:
        raise ValueError(f"unknown selection strategy {selection!r}")

    rows = []
    nudged = []
    for j, pos in enumerate(sel.indices):
        col = spectra[:, pos]
        if binning == "ew":
            rows.append(equi_width_bins(col, a))
        elif binning == "ed":
            bp, moved = equi_depth_bins(col, a, return_nudged=True)
            rows.append(bp)
            if moved:
                nudged.append(j)
        else:
            raise ValueError(f"unknown binning mode {binning!r}")
    if nudged:
        log.warning("equi-depth rows %s had collapsed breakpoints", nudged)
    return QuantizationModel(n, np.vstack(rows), sel, binning, candidate_limit, tuple(nudged))


def sfa_transform(series, model: QuantizationModel) -> SfaWord:
    """Word of one series at full cardinality."""
    return model.full_word(model.transform(np.asarray(series)))


def sfa_lower_bound(query_proj, word: SfaWord, model: SymbolicModel, weights=None,
                    bsf: float = math.inf) -> float:
    """Squared lower bound between a projected query and a (possibly reduced) word.

    Summed in chunks of 8 positions; once the running sum reaches ``bsf`` the
    partial sum is returned.
    """
    return model.lower_bound(query_proj, word, weights, bsf)


def model_from_bytes(blob: bytes) -> SymbolicModel:
    """Decode a model written by ``to_bytes`` (SFA or SAX)."""
    from .sax import SaxModel

    if blob[:8] != MODEL_MAGIC:
        raise ValueError("not a model blob")
    version, tag, bcode, n, l, a, climit = struct.unpack_from("<HBBIIII", blob, 8)
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported model version {version}")
    off = 8 + struct.calcsize("<HBBIIII")
    ints = np.frombuffer(blob, dtype="<i8", count=l, offset=off).astype(np.int64)
    off += 8 * l
    weights = np.frombuffer(blob, dtype="<f8", count=l, offset=off).astype(np.float64)
    off += 8 * l
    bp = np.frombuffer(blob, dtype="<f8", count=l * (a - 1), offset=off).astype(np.float64)
    off += 8 * l * (a - 1)
    if off != len(blob):
        raise ValueError("trailing bytes in model blob")
    bp = bp.reshape(l, a - 1)
    binning = {v: k for k, v in BINNING_CODES.items()}[bcode]
    if tag == TAG_SFA:
        return QuantizationModel(n, bp, SelectedIndices(ints, weights), binning, climit)
    if tag == TAG_SAX:
        return SaxModel(n, l, a)
    raise ValueError(f"unknown model type tag {tag}")


def save_model(model: SymbolicModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model.to_bytes())


def load_model(path) -> SymbolicModel:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
