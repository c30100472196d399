"""Real-input DFT with orthonormal scaling and variance-based value selection.

Spectra use an interleaved layout: position ``2k`` holds the real part and
``2k + 1`` the imaginary part of complex coefficient ``k``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_CANDIDATE_LIMIT = 16


@dataclass(frozen=True)
class SpectrumLayout:
    n: int
    candidate_limit: int = DEFAULT_CANDIDATE_LIMIT

    @property
    def coefficient_count(self) -> int:
        return self.n // 2 + 1

    @property
    def effective_limit(self) -> int:
        # short series have fewer coefficients than the default limit
        return min(self.candidate_limit, self.coefficient_count)

    @property
    def positions(self) -> int:
        return 2 * self.effective_limit


def position_weights(positions, n: int | None) -> np.ndarray:
    """Weight of each interleaved position in the spectral distance.

    DC (and Nyquist when ``n`` is even) occurs once in the full symmetric
    spectrum, every other coefficient twice.
    """
    k = np.asarray(positions, dtype=np.int64) // 2
    w = np.full(k.shape, 2.0)
    w[k == 0] = 1.0
    if n is not None and n % 2 == 0:
        w[k == n // 2] = 1.0
    return w


@dataclass(frozen=True)
class SelectedIndices:
    """Selected interleaved positions and their lower-bound weights."""

    indices: np.ndarray
    weights: np.ndarray

    @classmethod
    def for_positions(cls, positions, n: int | None) -> "SelectedIndices":
        idx = np.asarray(positions, dtype=np.int64)
        if len(np.unique(idx)) != len(idx):
            raise ValueError("selected positions must be distinct")
        return cls(idx, position_weights(idx, n))

    def __len__(self) -> int:
        return len(self.indices)


def real_dft(series) -> np.ndarray:
    """Orthonormal real DFT of one series (or each row of a 2-d array).

    Returns interleaved float64 reals of length ``2 * (n // 2 + 1)``.
    """
    x = np.asarray(series, dtype=np.float64)
    n = x.shape[-1]
    if n < 4:
        raise ValueError("series length must be at least 4")
    spec = np.fft.rfft(x, axis=-1, norm="ortho")
    return np.ascontiguousarray(spec).view(np.float64)


def naive_dft(series) -> np.ndarray:
    """O(n^2) reference DFT in the same layout as :func:`real_dft`."""
    x = np.asarray(series, dtype=np.float64)
    n = x.shape[-1]
    k = np.arange(n // 2 + 1)
    out = np.empty(x.shape[:-1] + (2 * len(k),))
    for j in k:
        angle = -2.0 * np.pi * j * np.arange(n) / n
        out[..., 2 * j] = (x * np.cos(angle)).sum(axis=-1) / np.sqrt(n)
        out[..., 2 * j + 1] = (x * np.sin(angle)).sum(axis=-1) / np.sqrt(n)
    return out


def full_energy(spectrum, n: int) -> np.ndarray:
    """Energy of the full symmetric spectrum reconstructed from the half spectrum."""
    s = np.asarray(spectrum, dtype=np.float64)
    w = position_weights(np.arange(s.shape[-1]), n)
    return (w * s * s).sum(axis=-1)


def select_by_variance(spectra, l: int, n: int | None = None, eligible=None) -> SelectedIndices:
    """Pick the ``l`` positions with the highest sample variance.

    Ties go to the lower position; the result is ordered by decreasing
    variance.  ``n`` is only needed to recognise the Nyquist position when
    weighting; ``eligible`` optionally masks positions out.
    """
    s = np.asarray(spectra, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] < 2:
        raise ValueError("need at least two spectra")
    var = s.var(axis=0, ddof=1)
    order = np.argsort(-var, kind="stable")
    if eligible is not None:
        ok = np.asarray(eligible, dtype=bool)
        order = order[ok[order]]
    if l > len(order):
        raise ValueError(f"cannot select {l} positions from {len(order)} available")
    return SelectedIndices.for_positions(order[:l], n)


def mean_selected_index(sel: SelectedIndices) -> float:
    """Mean complex-coefficient index (``position // 2``) over the selected positions."""
    if len(sel) == 0:
        raise ValueError("empty selection")
    return float((np.asarray(sel.indices) // 2).mean())


def weighted_spectral_distance(a_spec, b_spec, sel: SelectedIndices) -> float:
    """Weighted squared distance over the selected positions."""
    a = np.asarray(a_spec, dtype=np.float64)[sel.indices]
    b = np.asarray(b_spec, dtype=np.float64)[sel.indices]
    return float((sel.weights * (a - b) ** 2).sum())
