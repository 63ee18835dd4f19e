"""Chunk scheduling: Single-Chunk, Multi-Chunk and Pro-Active Multi-Chunk.

The functions here are pure decision procedures. The simulator (or a real
transport) owns time and calls them at three kinds of decision points:
start of transfer, completion of a chunk, and every ``realloc_period``
seconds.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .core import (
    PRIORITY_ORDER,
    Chunk,
    ChunkType,
    NetworkProfile,
    TransferParams,
    ValidationError,
    priority_rank,
)
from .estimator import find_optimal_parameters

ChannelAllocation = dict  # ChunkType -> channel count

DEFAULT_DELTA = {
    ChunkType.SMALL: 6,
    ChunkType.MEDIUM: 3,
    ChunkType.LARGE: 2,
    ChunkType.HUGE: 1,
}


class Algorithm(str, enum.Enum):
    SC = "sc"
    MC = "mc"
    PROMC = "promc"

    @classmethod
    def parse(cls, value: "str | Algorithm") -> "Algorithm":
        if isinstance(value, Algorithm):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValidationError(f"unknown algorithm {value!r}; expected one of sc, mc, promc") from None

    @property
    def label(self) -> str:
        return {"sc": "SC", "mc": "MC", "promc": "ProMC"}[self.value]


@dataclass(frozen=True)
class SchedulerConfig:
    algorithm: Algorithm = Algorithm.MC
    k_chunks: int = 2
    max_cc: int = 8
    delta: Mapping[ChunkType, float] = field(default_factory=lambda: dict(DEFAULT_DELTA))
    realloc_period: float = 5.0
    realloc_ratio: float = 2.0
    realloc_consecutive: int = 3

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm.parse(self.algorithm))
        if not 1 <= self.k_chunks <= 4 or int(self.k_chunks) != self.k_chunks:
            raise ValidationError(f"k_chunks must be an integer in [1, 4], got {self.k_chunks!r}")
        if int(self.max_cc) != self.max_cc or self.max_cc < 1:
            raise ValidationError(f"max_cc must be an integer >= 1, got {self.max_cc!r}")
        delta = dict(DEFAULT_DELTA)
        delta.update({ChunkType.parse(k): v for k, v in dict(self.delta).items()})
        for t, w in delta.items():
            if not w > 0:
                raise ValidationError(f"delta weight for {t.label} must be positive, got {w!r}")
        object.__setattr__(self, "delta", delta)
        if not self.realloc_period > 0:
            raise ValidationError("realloc_period must be positive")
        if not self.realloc_ratio > 0:
            raise ValidationError("realloc_ratio must be positive")
        if int(self.realloc_consecutive) != self.realloc_consecutive or self.realloc_consecutive < 1:
            raise ValidationError("realloc_consecutive must be an integer >= 1")


@dataclass(frozen=True)
class ChunkProgress:
    remaining_bytes: float
    current_throughput: float
    pending_files: Optional[int] = None

    @property
    def eta(self) -> float:
        if self.current_throughput <= 0:
            return math.inf
        return self.remaining_bytes / self.current_throughput


def _present(chunks: Iterable) -> list[ChunkType]:
    types = [c.chunk_type if isinstance(c, Chunk) else ChunkType.parse(c) for c in chunks]
    if len(set(types)) != len(types):
        raise ValidationError("at most one chunk per chunk type")
    return types


def assign_params(chunks: Sequence[Chunk], profile: NetworkProfile, max_cc: int | None = None) -> list[Chunk]:
    mcc = profile.max_cc if max_cc is None else max_cc
    return [
        c.with_params(find_optimal_parameters(c.avg_file_size, profile.bdp, profile.buffer_size, mcc))
        for c in chunks
    ]


def plan_sc(chunks: Sequence[Chunk], profile: NetworkProfile, max_cc: int | None = None) -> list[tuple[Chunk, TransferParams]]:
    """Sequential plan: every chunk with its own params, smallest type first."""
    _present(chunks)
    with_params = assign_params(sorted(chunks, key=lambda c: c.chunk_type), profile, max_cc)
    return [(c, c.params) for c in with_params]


def allocate_mc(chunks: Iterable, max_cc: int) -> ChannelAllocation:
    """Deal ``max_cc`` channels round-robin over Huge, Small, Large, Medium."""
    types = _present(chunks)
    alloc = {t: 0 for t in types}
    order = [t for t in PRIORITY_ORDER if t in alloc]
    if not order:
        return alloc
    for i in range(max_cc):
        alloc[order[i % len(order)]] += 1
    return alloc


def allocate_promc(chunks: Sequence[Chunk], max_cc: int, delta: Mapping[ChunkType, float] | None = None) -> ChannelAllocation:
    """Split ``max_cc`` channels in proportion to ``delta[type] * chunk size``.

    Floors first, then leftover channels go one each by largest fractional
    remainder (ties in MC priority order). If there are at least as many
    channels as chunks, a chunk floored to zero is topped up with one channel
    taken from the currently largest allocation.
    """
    types = _present(chunks)
    delta = {**DEFAULT_DELTA, **{ChunkType.parse(k): v for k, v in (delta or {}).items()}}
    weights = {c.chunk_type: Fraction(delta[c.chunk_type]) * c.total_size for c in chunks}
    total = sum(weights.values())
    alloc: ChannelAllocation = {}
    remainders = {}
    for t in types:
        share = weights[t] * max_cc / total
        alloc[t] = math.floor(share)
        remainders[t] = share - alloc[t]

    leftover = max_cc - sum(alloc.values())
    by_remainder = sorted(types, key=lambda t: (-remainders[t], priority_rank(t)))
    for t in by_remainder[:leftover]:
        alloc[t] += 1

    if max_cc >= len(types):
        for t in sorted(types, key=priority_rank):
            if alloc[t] == 0:
                donor = max(sorted(types, key=priority_rank), key=lambda d: alloc[d])
                alloc[donor] -= 1
                alloc[t] += 1
    return alloc


def initial_allocation(algorithm: Algorithm, chunks: Sequence[Chunk], config: SchedulerConfig) -> ChannelAllocation:
    algorithm = Algorithm.parse(algorithm)
    if algorithm is Algorithm.MC:
        return allocate_mc(chunks, config.max_cc)
    if algorithm is Algorithm.PROMC:
        return allocate_promc(chunks, config.max_cc, config.delta)
    first = min(chunks, key=lambda c: c.chunk_type)
    alloc = {c.chunk_type: 0 for c in chunks}
    alloc[first.chunk_type] = first.params.concurrency if first.params else 1
    return alloc


def _pick_max_eta(candidates: Sequence[ChunkType], eta: Mapping[ChunkType, float]) -> ChunkType:
    # largest ETA wins; equal ETAs (including inf) go by priority order
    return min(candidates, key=lambda t: (-eta[t], priority_rank(t)))


def reallocate_on_completion(
    allocation: Mapping[ChunkType, int],
    progress: Mapping[ChunkType, ChunkProgress],
    finished: ChunkType,
    channel_rate: Mapping[ChunkType, float] | None = None,
) -> ChannelAllocation:
    """Hand the finished chunk's channels, one at a time, to the slowest chunk.

    ``progress`` covers the chunks still running. ``channel_rate`` is the
    throughput one more channel is expected to add to a chunk; without it the
    chunk's current per-channel average is used. ETAs are re-evaluated after
    every single move so freed channels spread out instead of piling onto
    one chunk.
    """
    alloc = {t: int(n) for t, n in allocation.items()}
    freed = alloc.get(finished, 0)
    alloc[finished] = 0
    running = [t for t, p in progress.items() if t != finished and p.remaining_bytes > 0]
    if not running:
        return {t: 0 for t in alloc}

    with_work = [t for t in running if progress[t].pending_files is None or progress[t].pending_files > 0]
    candidates = with_work or running

    throughput = {t: float(progress[t].current_throughput) for t in running}
    marginal = {}
    known = [throughput[t] / alloc[t] for t in running if alloc.get(t, 0) > 0 and throughput[t] > 0]
    fallback = sum(known) / len(known) if known else 1.0
    for t in running:
        if channel_rate is not None and t in channel_rate:
            marginal[t] = float(channel_rate[t])
        elif alloc.get(t, 0) > 0 and throughput[t] > 0:
            marginal[t] = throughput[t] / alloc[t]
        else:
            marginal[t] = fallback

    for _ in range(freed):
        eta = {
            t: (progress[t].remaining_bytes / throughput[t]) if throughput[t] > 0 else math.inf
            for t in candidates
        }
        target = _pick_max_eta(candidates, eta)
        alloc[target] = alloc.get(target, 0) + 1
        throughput[target] += marginal[target]
    return alloc


def periodic_reallocate(
    history: Sequence[Mapping[ChunkType, float]],
    allocation: Mapping[ChunkType, int],
    ratio: float = 2.0,
    consecutive: int = 3,
    recipients: Optional[Iterable[ChunkType]] = None,
) -> Optional[tuple[ChunkType, ChunkType]]:
    """Decide a single fast -> slow channel move from ETA snapshots.

    ``history`` holds one ``{chunk type: ETA}`` map per period, oldest first.
    The fastest and slowest chunk of the newest snapshot form the candidate
    pair; the move happens only if ``slow >= ratio * fast`` in each of the
    last ``consecutive`` snapshots and the donor keeps at least one channel.
    """
    if len(history) < consecutive:
        return None
    latest = history[-1]
    donors = [t for t in latest if allocation.get(t, 0) >= 2 and math.isfinite(latest[t])]
    allowed = set(latest) if recipients is None else set(recipients) & set(latest)
    if not donors or not allowed:
        return None
    fast = min(donors, key=lambda t: (latest[t], priority_rank(t)))
    slow_candidates = [t for t in allowed if t != fast]
    if not slow_candidates:
        return None
    slow = _pick_max_eta(slow_candidates, latest)
    for snap in history[-consecutive:]:
        if fast not in snap or slow not in snap:
            return None
        f, s = snap[fast], snap[slow]
        if not math.isfinite(f) or not s >= ratio * f:
            return None
    return fast, slow


class PeriodicReallocator:
    """Keeps the ETA history for :func:`periodic_reallocate` and resets it after a move."""

    def __init__(self, ratio: float = 2.0, consecutive: int = 3):
        self.ratio = ratio
        self.consecutive = consecutive
        self.history: list[dict] = []

    def observe(self, snapshot: Mapping[ChunkType, float], allocation: Mapping[ChunkType, int], recipients=None):
        self.history.append(dict(snapshot))
        del self.history[: -self.consecutive]
        move = periodic_reallocate(self.history, allocation, self.ratio, self.consecutive, recipients)
        if move is not None:
            self.history.clear()
        return move

    def reset(self) -> None:
        self.history.clear()
