"""Data series containers, z-normalization and the chunked distance kernel.

Every distance in the package (exact or lower-bounding) is accumulated the
same way: per-position terms in float64, summed inside fixed chunks of
``CHUNK`` positions with a balanced tree, then the chunk sums are added
left to right.  Because each step is elementwise or sequential, a row gets
bitwise the same result whether it is evaluated alone or inside a batch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CHUNK = 8
SIGMA_EPS = 1e-12


@dataclass(frozen=True)
class NormStats:
    """Mean and population standard deviation of a raw series."""

    mu: float
    sigma: float

    @property
    def degenerate(self) -> bool:
        return self.sigma == 0.0


def z_normalize(series) -> tuple[np.ndarray, NormStats]:
    """Return ``(series - mean) / std`` (population std) and the source stats.

    A constant series (std below ``SIGMA_EPS``) maps to zeros and its stats
    carry ``sigma == 0``; callers can check ``stats.degenerate``.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a 1-d series")
    if x.size < 2:
        raise ValueError("series length must be at least 2")
    mu = float(x.mean())
    sigma = float(x.std())
    if sigma < SIGMA_EPS:
        return np.zeros_like(x), NormStats(mu, 0.0)
    return (x - mu) / sigma, NormStats(mu, sigma)


def z_normalize_rows(values) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise :func:`z_normalize` for a 2-d array.

    Returns ``(normalized float64, mu, sigma)``; degenerate rows get zeros
    and ``sigma = 0``.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError("expected a 2-d array with rows of length >= 2")
    mu = x.mean(axis=1)
    sigma = x.std(axis=1)
    dead = sigma < SIGMA_EPS
    safe = np.where(dead, 1.0, sigma)
    z = (x - mu[:, None]) / safe[:, None]
    z[dead] = 0.0
    sigma = np.where(dead, 0.0, sigma)
    return z, mu, sigma


class Dataset:
    """N z-normalized series of length n, stored series-major as float32.

    The storage is made read-only so it can be shared by worker threads
    without synchronization.
    """

    def __init__(self, values, mu=None, sigma=None):
        v = np.ascontiguousarray(values, dtype=np.float32)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 2:
            raise ValueError(f"dataset must be a non-empty N x n array, got shape {v.shape}")
        v.setflags(write=False)
        self.values = v
        self.mu = None if mu is None else np.asarray(mu, dtype=np.float64)
        self.sigma = None if sigma is None else np.asarray(sigma, dtype=np.float64)

    @classmethod
    def from_raw(cls, raw, block: int = 65536) -> "Dataset":
        """Normalize raw series row by row (in blocks) and store them."""
        raw = np.asarray(raw)
        if raw.ndim == 1:
            raw = raw[None, :]
        out = np.empty(raw.shape, dtype=np.float32)
        mu = np.empty(raw.shape[0])
        sigma = np.empty(raw.shape[0])
        for s in range(0, raw.shape[0], block):
            z, m, sd = z_normalize_rows(raw[s:s + block])
            out[s:s + block] = z
            mu[s:s + block] = m
            sigma[s:s + block] = sd
        return cls(out, mu, sigma)

    @property
    def series_count(self) -> int:
        return self.values.shape[0]

    @property
    def series_length(self) -> int:
        return self.values.shape[1]

    @property
    def degenerate(self) -> np.ndarray:
        if self.sigma is None:
            return np.zeros(self.series_count, dtype=bool)
        return self.sigma == 0.0

    def __len__(self) -> int:
        return self.series_count

    def __getitem__(self, i):
        return self.values[i]

    def __repr__(self) -> str:
        return f"Dataset(N={self.series_count}, n={self.series_length})"


def chunk_sums(terms: np.ndarray) -> np.ndarray:
    """Sum ``(m, d)`` float64 terms inside chunks of ``CHUNK`` columns.

    Columns are zero-padded to a multiple of ``CHUNK``; each chunk is reduced
    with a fixed balanced tree.  Returns an ``(m, ceil(d / CHUNK))`` array.
    """
    terms = np.asarray(terms, dtype=np.float64)
    m, d = terms.shape
    pad = (-d) % CHUNK
    if pad:
        terms = np.concatenate([terms, np.zeros((m, pad))], axis=1)
    c = terms.reshape(m, (d + pad) // CHUNK, CHUNK)
    return ((c[..., 0] + c[..., 1]) + (c[..., 2] + c[..., 3])) + (
        (c[..., 4] + c[..., 5]) + (c[..., 6] + c[..., 7])
    )


def accumulate(chunks: np.ndarray) -> np.ndarray:
    """Add chunk sums left to right; returns the ``(m,)`` totals."""
    return np.cumsum(chunks, axis=1)[:, -1]


def abandon_scan(chunks, bsf: float) -> float:
    """Sequentially add one row of chunk sums, stopping once the total reaches ``bsf``.

    The additions match :func:`accumulate`, so with ``bsf = inf`` the two agree
    bitwise.
    """
    acc = 0.0
    for s in chunks:
        acc += float(s)
        if acc >= bsf:
            return acc
    return acc


def squared_distances(rows, query) -> np.ndarray:
    """Squared Euclidean distance from each row of ``rows`` to ``query``."""
    rows = np.asarray(rows)
    if rows.ndim == 1:
        rows = rows[None, :]
    q = np.asarray(query, dtype=np.float64)
    if rows.shape[1] != q.shape[0]:
        raise ValueError(f"length mismatch: {rows.shape[1]} != {q.shape[0]}")
    diff = rows - q  # promotes float32 rows exactly
    return accumulate(chunk_sums(diff * diff))


def euclidean_distance(a, b) -> float:
    """Plain Euclidean distance between two equal-length series."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return math.sqrt(float(squared_distances(a[None, :], b)[0]))
