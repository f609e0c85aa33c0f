"""Reproducible random streams.

Every Monte Carlo job is split into fixed-size chunks.  Chunk ``j`` of a job
draws from a Philox generator keyed by ``(seed, *tags, j)`` so the result does
not depend on how many workers process the chunks or in which order.

``keyed_normals`` is a stateless counter-based generator: the normal returned
for a given key tuple is always the same.  The bridge refinement in
:mod:`brm.paths` uses it so that a refined node of a path has the same value in
every run that visits it.
"""

from __future__ import annotations

import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import ndtri

CHUNK = 8192

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _tag_int(tag) -> int:
    if isinstance(tag, str):
        return zlib.crc32(tag.encode())
    return int(tag)


def stream(seed: int, *tags) -> np.random.Generator:
    """Philox generator for the stream identified by ``(seed, *tags)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_tag_int(t) for t in tags))
    return np.random.Generator(np.random.Philox(ss))


def stream_key(seed: int, *tags) -> int:
    """A 64-bit key for :func:`keyed_normals` derived from ``(seed, *tags)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_tag_int(t) for t in tags))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _mix(z):
    # splitmix64 finalizer; wraps modulo 2**64
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def keyed_normals(key: int, ids, d: int) -> np.ndarray:
    """Standard normals of shape ``(n, d)`` determined by ``key`` and the id columns.

    ``ids`` is a sequence of integer arrays of common length ``n``.
    """
    return ndtri(keyed_uniforms(key, ids, d))


def keyed_uniforms(key: int, ids, d: int) -> np.ndarray:
    """Uniforms on ``(0, 1)`` keyed like :func:`keyed_normals`."""
    n = len(ids[0])
    h = np.full(n, np.uint64(key % 2**64), dtype=np.uint64)
    for col in ids:
        h = _mix(h ^ (np.asarray(col).astype(np.uint64) * _GOLDEN + np.uint64(0x632BE59BD9B4E019)))
    comp = np.arange(1, d + 1, dtype=np.uint64) * _GOLDEN
    hh = _mix(h[:, None] ^ comp[None, :])
    return ((hh >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def n_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get("BRM_THREADS", "1") or 1)
    return max(1, int(threads))


def chunk_sizes(n_rep: int, chunk: int = CHUNK) -> list[int]:
    """Split ``n_rep`` into even-sized chunks (antithetic pairs need even sizes)."""
    if n_rep % 2:
        n_rep += 1
    sizes = [chunk] * (n_rep // chunk)
    if n_rep % chunk:
        sizes.append(n_rep % chunk)
    return sizes


def map_chunks(fn, n_rep: int, threads: int | None = None, chunk: int = CHUNK) -> list:
    """Run ``fn(chunk_index, size, offset)`` over all chunks, results in chunk order."""
    sizes = chunk_sizes(n_rep, chunk)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)
    jobs = list(zip(range(len(sizes)), sizes, offsets))
    workers = n_threads(threads)
    if workers == 1 or len(jobs) == 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


class Accumulator:
    """Order-independent mean/variance accumulation from per-chunk partial sums."""

    def __init__(self):
        self.sums: list[float] = []
        self.sqsums: list[float] = []
        self.count = 0

    def add(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        self.sums.append(math.fsum(values))
        self.sqsums.append(math.fsum(values * values))
        self.count += values.size

    def mean_stderr(self) -> tuple[float, float]:
        n = self.count
        mean = math.fsum(self.sums) / n
        if n < 2:
            return mean, float("nan")
        var = max(math.fsum(self.sqsums) / n - mean * mean, 0.0) * n / (n - 1)
        return mean, math.sqrt(var / n)
