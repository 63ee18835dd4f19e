"""Split a dataset into Small/Medium/Large/Huge chunks by file size.

The cut-off ladder is ``[BW/20, BW/5, BW/2]`` where ``BW`` is the bandwidth in
bytes/second, so each threshold is the number of bytes the link carries in
1/20, 1/5 and 1/2 of a second. A request for ``k`` chunks uses the first
``k - 1`` rungs; the top bucket is open-ended.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import kernels
from .core import Chunk, ChunkType, Dataset, EmptyDatasetError, FileEntry, NetworkProfile, ValidationError

LADDER_DIVISORS = (20, 5, 2)


def threshold_ladder(bandwidth: float) -> list[Fraction]:
    bw = Fraction(bandwidth)
    return [bw / d for d in LADDER_DIVISORS]


@dataclass(frozen=True)
class PartitionSpec:
    k: int
    thresholds: tuple[Fraction, ...]

    @classmethod
    def for_bandwidth(cls, bandwidth: float, k: int) -> "PartitionSpec":
        check_k(k)
        return cls(k, tuple(threshold_ladder(bandwidth)[: k - 1]))

    @property
    def integer_thresholds(self) -> np.ndarray:
        # sizes are whole bytes, so size > t  <=>  size > floor(t)
        return np.array([math.floor(t) for t in self.thresholds], dtype=np.float64)


def check_k(k) -> None:
    if isinstance(k, bool) or int(k) != k or not 1 <= k <= 4:
        raise ValidationError(f"chunk count k must be an integer in [1, 4], got {k!r}")


def classify_average(avg: Fraction, bandwidth: float) -> ChunkType:
    """Chunk type of a single average size against the full ladder."""
    bucket = sum(1 for t in threshold_ladder(bandwidth) if Fraction(avg) > t)
    return ChunkType(bucket)


def partition_files(ds: Dataset, profile: NetworkProfile, k: int) -> list[Chunk]:
    """Group the files of ``ds`` into up to ``k`` chunks.

    Empty buckets are dropped. Chunks come back in increasing size-type order
    and keep manifest order internally. With ``k == 1`` the single chunk is
    typed by the dataset's average file size.
    """
    check_k(k)
    if not ds.files:
        raise EmptyDatasetError()
    if k == 1:
        avg = Fraction(ds.total_size, len(ds.files))
        return [Chunk(classify_average(avg, profile.bandwidth), ds.files)]

    spec = PartitionSpec.for_bandwidth(profile.bandwidth, k)
    sizes = np.fromiter((f.size for f in ds.files), dtype=np.float64, count=len(ds.files))
    buckets = kernels.classify_sizes(sizes, spec.integer_thresholds)
    groups: list[list[FileEntry]] = [[] for _ in range(k)]
    for f, b in zip(ds.files, buckets.tolist()):
        groups[b].append(f)
    return [Chunk(ChunkType(i), tuple(g)) for i, g in enumerate(groups) if g]
