"""Seeded synthetic corpora for tests, demos and the desk-scale benchmarks.

Frequencies are in cycles per series, so a profile keeps its character at
any length.
"""
from __future__ import annotations

import numpy as np

PROFILES = ("smooth", "noisy", "square-wave", "random-walk")


def _sinusoids(rng, m, n, count, fmin, fmax):
    t = np.arange(n) / n
    f = rng.uniform(fmin, fmax, size=(m, count, 1))
    ph = rng.uniform(0, 2 * np.pi, size=(m, count, 1))
    amp = rng.uniform(0.5, 1.5, size=(m, count, 1))
    return (amp * np.sin(2 * np.pi * f * t + ph)).sum(axis=1)


def generate(profile: str, count: int, n: int = 256, seed: int = 0, block: int = 65536) -> np.ndarray:
    """Raw (not normalized) ``(count, n)`` float32 series of one profile.

    smooth       three low-frequency sinusoids plus light noise
    noisy        three mid-frequency sinusoids buried in noise
    square-wave  a high-frequency square wave with random period and phase
    random-walk  cumulative sum of Gaussian steps
    """
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {', '.join(PROFILES)}")
    rng = np.random.default_rng(seed)
    out = np.empty((count, n), dtype=np.float32)
    t = np.arange(n) / n
    for s in range(0, count, block):
        m = min(block, count - s)
        if profile == "smooth":
            x = _sinusoids(rng, m, n, 3, 0.5, 4.0) + 0.05 * rng.standard_normal((m, n))
        elif profile == "noisy":
            x = _sinusoids(rng, m, n, 3, 3.0, 15.0) + 0.5 * rng.standard_normal((m, n))
        elif profile == "square-wave":
            f = rng.uniform(10.5, 15.0, size=(m, 1))
            ph = rng.uniform(0, 2 * np.pi, size=(m, 1))
            x = np.sign(np.sin(2 * np.pi * f * t + ph)) + 0.1 * rng.standard_normal((m, n))
        else:
            x = np.cumsum(rng.standard_normal((m, n)), axis=1)
        out[s:s + m] = x
    return out


def periodic_squares(count: int, n: int = 256, periods=(8, 16), noise: float = 0.05,
                     seed: int = 0) -> np.ndarray:
    """Square waves whose period (in samples) divides every PAA segment.

    Each segment then averages to about zero, so PAA-based summaries see an
    almost flat line while the spectrum keeps all the energy.  At ``n = 256``
    the defaults put that energy at 16 and 32 cycles, so a spectral summary
    needs a candidate limit above 32 to see it.
    """
    rng = np.random.default_rng(seed)
    p = rng.choice(np.asarray(periods), size=(count, 1))
    shift = rng.integers(0, 1 << 16, size=(count, 1))
    i = np.arange(n)
    x = np.where(((i + shift) % p) < p // 2, 1.0, -1.0)
    return (x + noise * rng.standard_normal((count, n))).astype(np.float32)


def split_queries(raw: np.ndarray, query_count: int, seed: int = 0):
    """Hold out ``query_count`` random rows: returns ``(data, queries)``."""
    rng = np.random.default_rng(seed)
    pick = np.zeros(len(raw), dtype=bool)
    pick[rng.choice(len(raw), size=query_count, replace=False)] = True
    return raw[~pick], raw[pick]
