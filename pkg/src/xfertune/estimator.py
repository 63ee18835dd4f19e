"""Closed-form pipelining / parallelism / concurrency heuristics for a chunk."""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Real

from .core import Chunk, NetworkProfile, TransferParams, ValidationError

MIN_CONCURRENCY = 2


def _positive(name: str, value) -> Fraction:
    if isinstance(value, bool) or not isinstance(value, (Real, Fraction)) or not value > 0:
        raise ValidationError(f"{name} must be positive, got {value!r}")
    return Fraction(value)


def concurrency_term(avg_file_size, bdp) -> Fraction:
    """The unclamped ``BDP / avgFileSize`` ratio, exact."""
    return _positive("bdp", bdp) / _positive("avg_file_size", avg_file_size)


def find_optimal_parameters(avg_file_size, bdp, buffer_size, max_cc: int) -> TransferParams:
    """Parameter triple for a chunk whose files average ``avg_file_size`` bytes.

    pipelining  = floor(BDP / avg)
    parallelism = min(ceil(BDP / buffer), ceil(avg / buffer))
    concurrency = min(max(floor(BDP / avg), 2), max_cc), never below 1

    A ``max_cc`` of 1 overrides the floor of two concurrent transfers.
    """
    avg = _positive("avg_file_size", avg_file_size)
    bdp_ = _positive("bdp", bdp)
    buf = _positive("buffer_size", buffer_size)
    if isinstance(max_cc, bool) or int(max_cc) != max_cc or max_cc < 1:
        raise ValidationError(f"max_cc must be an integer >= 1, got {max_cc!r}")

    ratio = math.floor(bdp_ / avg)
    pipelining = ratio
    parallelism = min(math.ceil(bdp_ / buf), math.ceil(avg / buf))
    concurrency = max(min(max(ratio, MIN_CONCURRENCY), int(max_cc)), 1)
    return TransferParams(pipelining, parallelism, concurrency)


def estimate_chunk(chunk: Chunk, profile: NetworkProfile, max_cc: int | None = None) -> Chunk:
    """Return ``chunk`` with estimator params attached."""
    params = find_optimal_parameters(
        chunk.avg_file_size,
        profile.bdp,
        profile.buffer_size,
        profile.max_cc if max_cc is None else max_cc,
    )
    return chunk.with_params(params)
