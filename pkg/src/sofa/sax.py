"""iSAX baseline: PAA segment means quantized against N(0, 1) quantiles."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import ndtri

from .sfa import TAG_SAX, SfaWord, SymbolicModel


def segment_bounds(n: int, l: int) -> tuple[np.ndarray, np.ndarray]:
    """Start offsets and lengths of ``l`` segments; the last one takes the remainder."""
    if l < 1 or l > n:
        raise ValueError(f"cannot split length {n} into {l} segments")
    size = n // l
    starts = np.arange(l, dtype=np.int64) * size
    lengths = np.full(l, size, dtype=np.int64)
    lengths[-1] = n - starts[-1]
    return starts, lengths


def paa(series, l: int) -> np.ndarray:
    """Segment means of one series ``(n,)`` or of each row of ``(m, n)``."""
    x = np.asarray(series, dtype=np.float64)
    starts, lengths = segment_bounds(x.shape[-1], l)
    return np.add.reduceat(x, starts, axis=-1) / lengths


def gaussian_breakpoints(a: int) -> np.ndarray:
    """The ``a - 1`` quantiles ``Phi^-1(i / a)`` of the standard normal.

    The lower half is computed and mirrored, so the row is exactly symmetric.
    """
    if a < 2 or a & (a - 1):
        raise ValueError(f"alphabet size must be a power of two >= 2, got {a}")
    half = ndtri(np.arange(1, a // 2) / a)
    return np.concatenate([half, [0.0], -half[::-1]])


@dataclass(frozen=True, eq=False)
class SaxModel(SymbolicModel):
    n: int
    l: int
    a: int

    type_tag = TAG_SAX

    def __post_init__(self):
        starts, lengths = segment_bounds(self.n, self.l)
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "lengths", lengths)
        self._check_alphabet()

    @cached_property
    def row(self) -> np.ndarray:
        return gaussian_breakpoints(self.a)

    @property
    def breakpoints(self) -> np.ndarray:
        return np.broadcast_to(self.row, (self.l, self.a - 1))

    @property
    def segment_length(self) -> float:
        return self.n / self.l

    @property
    def weights(self) -> np.ndarray:
        # per-segment length: (n / l) when l divides n
        return self.lengths.astype(np.float64)

    def project(self, series) -> np.ndarray:
        x = np.asarray(series)
        if x.shape[-1] != self.n:
            raise ValueError(f"series length {x.shape[-1]} != model length {self.n}")
        return np.add.reduceat(x.astype(np.float64), self.starts, axis=-1) / self.lengths

    def _extra_fields(self):
        return self.starts, 0


def isax_transform(series, model: SaxModel) -> SfaWord:
    return model.full_word(model.transform(np.asarray(series)))


def sax_mindist(query_paa, word: SfaWord, model: SaxModel, bsf: float = math.inf) -> float:
    """Squared iSAX mindist: segment-length weighted squared gaps, chunked like SFA."""
    return model.lower_bound(query_paa, word, None, bsf)
