"""Deterministic fluid-flow transfer simulator.

Between events every transferring channel moves bytes at the rate given by a
:class:`ThroughputModel`; rates are recomputed whenever the set of active
channels changes. A channel cycles through

    (RECONNECT) -> GAP -> TRANSFER -> GAP -> TRANSFER ...

where GAP is the per-file command delay and RECONNECT is only paid when a
channel switches to a chunk with a different parallelism.
"""

from __future__ import annotations

import csv
import io
import json
import math
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .core import (
    PRIORITY_ORDER,
    Chunk,
    ChunkType,
    Dataset,
    EmptyDatasetError,
    NetworkProfile,
    TransferParams,
    priority_rank,
)
from .kernels import GAP, IDLE, RECONNECT, TRANSFER
from .partitioner import partition_files
from .schedulers import (
    Algorithm,
    ChunkProgress,
    PeriodicReallocator,
    SchedulerConfig,
    assign_params,
    initial_allocation,
    reallocate_on_completion,
)

DEFAULT_K_IO = 4_000_000
TIME_TOL = 1e-9


class SimulationError(RuntimeError):
    pass


class ThroughputModel(ABC):
    """Port through which the simulator asks how fast a channel runs."""

    @abstractmethod
    def rate(self, file_size: float, params: TransferParams, profile: NetworkProfile, n_active: int) -> float:
        """Bytes/second of one channel moving a file of ``file_size`` bytes."""

    @abstractmethod
    def gap(self, params: TransferParams, profile: NetworkProfile) -> float:
        """Idle seconds before each file on a channel."""

    def reconnect_delay(self, params: TransferParams, profile: NetworkProfile) -> float:
        return 0.0

    def rates(self, state, sizes, parallelism, pipelining, profile: NetworkProfile) -> np.ndarray:
        out = np.zeros(state.shape[0], dtype=np.float64)
        active = np.flatnonzero(state == TRANSFER)
        for i in active:
            p = TransferParams(int(pipelining[i]), int(parallelism[i]), 1)
            out[i] = self.rate(float(sizes[i]), p, profile, len(active))
        return out


@dataclass(frozen=True)
class ReferenceModel(ThroughputModel):
    """Buffer limit, fair share, disk cap and a small-file penalty.

    rate = min(parallelism * buffer / rtt, bandwidth / n, io_cap / n)
           * size / (size + k_io)
    gap  = rtt / (pipelining + 1)
    """

    k_io: float = DEFAULT_K_IO
    reconnect_factor: float = 1.0

    def rate(self, file_size, params, profile, n_active):
        return reference_rate(file_size, params, profile, n_active, self.k_io)

    def gap(self, params, profile):
        return reference_gap(params, profile)

    def reconnect_delay(self, params, profile):
        return self.reconnect_factor * profile.rtt * params.parallelism

    def rates(self, state, sizes, parallelism, pipelining, profile):
        return kernels.channel_rates(
            state,
            sizes,
            parallelism,
            float(profile.buffer_size),
            float(profile.rtt),
            float(profile.bandwidth),
            float(profile.io_cap),
            float(self.k_io),
        )


def reference_rate(file_size, params: TransferParams, profile: NetworkProfile, n_active: int, k_io: float = DEFAULT_K_IO) -> float:
    if n_active < 1:
        raise ValueError("n_active must be >= 1")
    cap = min(
        params.parallelism * profile.buffer_size / profile.rtt,
        profile.bandwidth / n_active,
        profile.io_cap / n_active,
    )
    return cap * (file_size / (file_size + k_io))


def reference_gap(params: TransferParams, profile: NetworkProfile) -> float:
    return profile.rtt / (params.pipelining + 1)


# --------------------------------------------------------------------------
# report


@dataclass
class SimReport:
    algorithm: str
    k_chunks: int
    max_cc: int
    total_time: float
    total_bytes: int
    chunks: list[dict]
    samples: list[dict] = field(default_factory=list)
    allocation_log: list[dict] = field(default_factory=list)
    file_records: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def aggregate_throughput(self) -> float:
        return self.total_bytes / self.total_time if self.total_time > 0 else math.inf

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "k_chunks": self.k_chunks,
            "max_cc": self.max_cc,
            "total_time": self.total_time,
            "total_bytes": self.total_bytes,
            "aggregate_throughput": self.aggregate_throughput,
            "chunks": self.chunks,
            "samples": self.samples,
            "allocation_log": self.allocation_log,
            "files": self.file_records,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "chunk", "channels", "throughput", "remaining"])
        for s in self.samples:
            w.writerow([repr(s["time"]), s["chunk"], s["channels"], repr(s["throughput"]), repr(s["remaining"])])
        return buf.getvalue()


# --------------------------------------------------------------------------
# engine


class _ChunkState:
    __slots__ = ("index", "chunk", "type", "params", "queue", "files_left", "completed_bytes", "completed_at",
                 "sampled_bytes")

    def __init__(self, index: int, chunk: Chunk, first_file: int):
        self.index = index
        self.chunk = chunk
        self.type = chunk.chunk_type
        self.params = chunk.params
        self.queue = deque(range(first_file, first_file + len(chunk.files)))
        self.files_left = len(chunk.files)
        self.completed_bytes = 0
        self.completed_at: Optional[float] = None
        self.sampled_bytes = 0.0

    @property
    def finished(self) -> bool:
        return self.files_left == 0


class FluidSimulation:
    """One simulation run. Use :func:`run_simulation` unless you need the internals."""

    def __init__(
        self,
        chunks: Sequence[Chunk],
        profile: NetworkProfile,
        config: SchedulerConfig,
        model: Optional[ThroughputModel] = None,
    ):
        if not chunks:
            raise EmptyDatasetError()
        self.profile = profile
        self.config = config
        self.model = model or ReferenceModel()
        self.algorithm = config.algorithm

        missing = [c for c in chunks if c.params is None]
        if missing:
            filled = iter(assign_params(missing, profile, config.max_cc))
            chunks = [c if c.params is not None else next(filled) for c in chunks]
        self.chunks = sorted(chunks, key=lambda c: c.chunk_type)

        self.states: list[_ChunkState] = []
        sizes, ids, owner = [], [], []
        for i, c in enumerate(self.chunks):
            self.states.append(_ChunkState(i, c, len(sizes)))
            for f in c.files:
                sizes.append(f.size)
                ids.append(f.id)
                owner.append(i)
        self.file_size = np.array(sizes, dtype=np.float64)
        self.file_size_int = sizes
        self.file_id = ids
        self.file_chunk = owner
        self.by_type = {s.type: s for s in self.states}

        n = config.max_cc
        self.n_channels = n
        self.ch_state = np.full(n, IDLE, dtype=np.int64)
        self.ch_owner = np.full(n, -1, dtype=np.int64)
        self.ch_file = np.full(n, -1, dtype=np.int64)
        self.ch_size = np.zeros(n, dtype=np.float64)
        self.ch_remaining = np.zeros(n, dtype=np.float64)
        self.ch_timer = np.zeros(n, dtype=np.float64)
        self.ch_par = np.ones(n, dtype=np.float64)
        self.ch_pip = np.zeros(n, dtype=np.float64)
        self.ch_conn = np.zeros(n, dtype=np.int64)  # parallelism of open connection, 0 = none

        self.now = 0.0
        self.alloc = {s.type: 0 for s in self.states}
        self.allocation_log: list[dict] = []
        self.samples: list[dict] = []
        self.file_records: list[dict] = []
        self.sc_phase = 0
        self.periodic = PeriodicReallocator(config.realloc_ratio, config.realloc_consecutive)
        self._rates = np.zeros(n, dtype=np.float64)

    # -- helpers ----------------------------------------------------------

    def _log_allocation(self, reason: str) -> None:
        self.allocation_log.append({
            "time": self.now,
            "reason": reason,
            "allocation": {t.label: self.alloc[t] for t in sorted(self.alloc)},
            "unfinished": [s.type.label for s in self.states if not s.finished],
        })

    def _dispatch(self, ch: int) -> None:
        """Give channel ``ch`` its next piece of work from its owning chunk."""
        owner = int(self.ch_owner[ch])
        if owner < 0:
            self.ch_state[ch] = IDLE
            self.ch_file[ch] = -1
            return
        st = self.states[owner]
        par = st.params.parallelism
        conn = int(self.ch_conn[ch])
        if conn != 0 and conn != par:
            self.ch_state[ch] = RECONNECT
            self.ch_file[ch] = -1
            self.ch_timer[ch] = self.now + self.model.reconnect_delay(st.params, self.profile)
            self.ch_conn[ch] = 0
            return
        self.ch_conn[ch] = par
        if not st.queue:
            self.ch_state[ch] = IDLE
            self.ch_file[ch] = -1
            return
        f = st.queue.popleft()
        self.ch_file[ch] = f
        self.ch_size[ch] = self.file_size[f]
        self.ch_par[ch] = par
        self.ch_pip[ch] = st.params.pipelining
        gap = self.model.gap(st.params, self.profile)
        if gap > 0:
            self.ch_state[ch] = GAP
            self.ch_timer[ch] = self.now + gap
        else:
            self._begin_transfer(ch)

    def _begin_transfer(self, ch: int) -> None:
        self.ch_state[ch] = TRANSFER
        self.ch_remaining[ch] = self.ch_size[ch]

    def _assign(self, ch: int, owner: int) -> None:
        """Make ``owner`` the channel's chunk.

        An idle channel starts at once, a channel still waiting on a command
        gap gives its file back first, and a channel that is transferring or
        reconnecting switches when that finishes.
        """
        self.ch_owner[ch] = owner
        state = int(self.ch_state[ch])
        if state == GAP:
            f = int(self.ch_file[ch])
            self.states[self.file_chunk[f]].queue.appendleft(f)
            self._dispatch(ch)
        elif state == IDLE:
            self._dispatch(ch)

    def _channels_of(self, owner: int) -> list[int]:
        return [int(c) for c in np.flatnonzero(self.ch_owner == owner)]

    def _effective_channel_rate(self, st: _ChunkState, n_active: int) -> float:
        avg = float(st.chunk.avg_file_size)
        r = self.model.rate(avg, st.params, self.profile, max(n_active, 1))
        if r <= 0:
            raise SimulationError(f"model returned non-positive rate {r!r} for {st.type.label} chunk")
        return avg / (avg / r + self.model.gap(st.params, self.profile))

    def _in_flight_bytes(self, owner: int) -> float:
        total = 0.0
        for ch in range(self.n_channels):
            f = int(self.ch_file[ch])
            if f >= 0 and self.file_chunk[f] == owner and self.ch_state[ch] == TRANSFER:
                total += self.ch_size[ch] - self.ch_remaining[ch]
        return total

    # -- scheduling decisions --------------------------------------------

    def _start(self) -> None:
        if self.algorithm is Algorithm.SC:
            self._start_sc_phase()
            return
        self.alloc.update(initial_allocation(self.algorithm, self.chunks, self.config))
        ch = 0
        for t in PRIORITY_ORDER:
            if t not in self.by_type:
                continue
            for _ in range(self.alloc[t]):
                self.ch_owner[ch] = self.by_type[t].index
                ch += 1
        self._log_allocation("initial")
        for c in range(self.n_channels):
            self._dispatch(c)

    def _start_sc_phase(self) -> None:
        while self.sc_phase < len(self.states) and self.states[self.sc_phase].finished:
            self.sc_phase += 1
        for t in self.alloc:
            self.alloc[t] = 0
        if self.sc_phase >= len(self.states):
            self._log_allocation("done")
            return
        st = self.states[self.sc_phase]
        cc = min(st.params.concurrency, self.n_channels)
        self.alloc[st.type] = cc
        self._log_allocation("initial" if self.now == 0 else f"phase:{st.type.label}")
        for ch in range(self.n_channels):
            self.ch_owner[ch] = st.index if ch < cc else -1
            self._dispatch(ch)

    def _on_chunk_complete(self, st: _ChunkState) -> None:
        st.completed_at = self.now
        if self.algorithm is Algorithm.SC:
            self.sc_phase = st.index + 1
            self._start_sc_phase()
            return
        freed = self._channels_of(st.index)
        running = [s for s in self.states if not s.finished]
        n_total = self.n_channels
        progress = {}
        marginal = {}
        for s in running:
            eff = self._effective_channel_rate(s, n_total)
            remaining = s.chunk.total_size - s.completed_bytes - self._in_flight_bytes(s.index)
            progress[s.type] = ChunkProgress(remaining, self.alloc[s.type] * eff, len(s.queue))
            marginal[s.type] = eff
        new_alloc = reallocate_on_completion(self.alloc, progress, st.type, marginal)
        targets = []
        for t in PRIORITY_ORDER:
            if t in new_alloc and t != st.type:
                targets.extend([t] * (new_alloc[t] - self.alloc.get(t, 0)))
        self.alloc = {t: new_alloc.get(t, 0) for t in self.alloc}
        self.alloc[st.type] = 0
        self._log_allocation(f"completion:{st.type.label}")
        for ch, t in zip(freed, targets):
            self._assign(ch, self.by_type[t].index)
        for ch in freed[len(targets):]:
            self._assign(ch, -1)

    def _on_tick(self, last_tick: float) -> None:
        period = self.now - last_tick
        snapshot = {}
        recipients = []
        for s in self.states:
            if s.finished:
                continue
            done = s.completed_bytes + self._in_flight_bytes(s.index)
            throughput = (done - s.sampled_bytes) / period if period > 0 else 0.0
            s.sampled_bytes = done
            remaining = s.chunk.total_size - done
            self.samples.append({
                "time": self.now,
                "chunk": s.type.label,
                "channels": self.alloc[s.type],
                "throughput": throughput,
                "remaining": remaining,
            })
            snapshot[s.type] = remaining / throughput if throughput > 0 else math.inf
            if s.queue:
                recipients.append(s.type)
        if self.algorithm is not Algorithm.PROMC:
            return
        move = self.periodic.observe(snapshot, self.alloc, recipients)
        if move is None:
            return
        fast, slow = move
        self._move_one_channel(self.by_type[fast], self.by_type[slow])
        self._log_allocation(f"periodic:{fast.label}->{slow.label}")

    def _move_one_channel(self, donor: _ChunkState, target: _ChunkState) -> None:
        chans = self._channels_of(donor.index)
        rank = {IDLE: 0, GAP: 1, RECONNECT: 2, TRANSFER: 3}

        def cost(ch):
            r = self.ch_remaining[ch] if self.ch_state[ch] == TRANSFER else 0.0
            return (rank[int(self.ch_state[ch])], r, ch)

        ch = min(chans, key=cost)
        self.alloc[donor.type] -= 1
        self.alloc[target.type] += 1
        self._assign(ch, target.index)

    # -- main loop ---------------------------------------------------------

    def run(self) -> SimReport:
        model, profile = self.model, self.profile
        self._start()
        period = self.config.realloc_period
        next_tick = period
        last_tick = 0.0
        files_left = len(self.file_id)
        max_iter = 50 * files_left + 10_000_000

        for _ in range(max_iter):
            if files_left == 0:
                break
            rates = model.rates(self.ch_state, self.ch_size, self.ch_par, self.ch_pip, profile)
            active = self.ch_state == TRANSFER
            if active.any():
                bad = rates[active]
                if not np.all(np.isfinite(bad)) or np.any(bad <= 0):
                    raise SimulationError(f"model returned non-positive rate at t={self.now!r}: {bad.tolist()}")
            dt = kernels.next_event_dt(self.ch_state, self.ch_remaining, rates, self.ch_timer, self.now)
            if not math.isfinite(dt):
                raise SimulationError(f"stalled at t={self.now!r} with {files_left} files outstanding")
            tick_due = False
            if self.now + dt >= next_tick - TIME_TOL:
                dt = max(next_tick - self.now, 0.0)
                tick_due = True
            kernels.advance(self.ch_state, self.ch_remaining, rates, dt)
            self.now = next_tick if tick_due else self.now + dt

            due = kernels.due_channels(self.ch_state, self.ch_remaining, rates, self.ch_timer, self.now, TIME_TOL)
            completions, gaps, reconnects = [], [], []
            for ch in due.tolist():
                st = int(self.ch_state[ch])
                if st == TRANSFER:
                    completions.append(ch)
                elif st == GAP:
                    gaps.append(ch)
                else:
                    reconnects.append(ch)

            def order(ch):
                f = int(self.ch_file[ch])
                owner = self.file_chunk[f] if f >= 0 else int(self.ch_owner[ch])
                return (priority_rank(self.states[owner].type), self.file_id[f] if f >= 0 else "", ch)

            finished_now = []
            for ch in sorted(completions, key=order):
                f = int(self.ch_file[ch])
                st = self.states[self.file_chunk[f]]
                st.files_left -= 1
                st.completed_bytes += self.file_size_int[f]
                files_left -= 1
                self.file_records.append({
                    "id": self.file_id[f],
                    "chunk": st.type.label,
                    "size": self.file_size_int[f],
                    "completed_at": self.now,
                })
                self.ch_remaining[ch] = 0.0
                self.ch_file[ch] = -1
                self.ch_state[ch] = IDLE
                if st.finished:
                    finished_now.append(st)
                self._dispatch(ch)

            for st in sorted(finished_now, key=lambda s: priority_rank(s.type)):
                self._on_chunk_complete(st)

            for ch in sorted(gaps, key=order):
                if self.ch_state[ch] == GAP:
                    self._begin_transfer(ch)
            for ch in sorted(reconnects, key=order):
                if self.ch_state[ch] == RECONNECT:
                    self._dispatch(ch)

            if tick_due:
                self._on_tick(last_tick)
                last_tick = self.now
                next_tick = self.now + period
        else:  # pragma: no cover - guards against a livelock bug
            raise SimulationError("iteration limit reached")

        return self._report()

    def _report(self) -> SimReport:
        chunks = []
        for s in self.states:
            p = s.params
            chunks.append({
                "type": s.type.label,
                "files": len(s.chunk.files),
                "total_size": s.chunk.total_size,
                "avg_file_size": float(s.chunk.avg_file_size),
                "params": p.as_dict(),
                "completed_at": s.completed_at,
            })
        total_bytes = sum(r["size"] for r in self.file_records)
        return SimReport(
            algorithm=self.algorithm.value,
            k_chunks=self.config.k_chunks,
            max_cc=self.config.max_cc,
            total_time=self.now,
            total_bytes=total_bytes,
            chunks=chunks,
            samples=self.samples,
            allocation_log=self.allocation_log,
            file_records=self.file_records,
        )


def run_simulation(
    chunks: Sequence[Chunk],
    profile: NetworkProfile,
    config: SchedulerConfig,
    model: Optional[ThroughputModel] = None,
) -> SimReport:
    """Simulate transferring ``chunks`` under ``config.algorithm``.

    Chunks without params get estimator params computed with
    ``config.max_cc`` as the channel budget.
    """
    return FluidSimulation(chunks, profile, config, model).run()


def simulate_dataset(
    ds: Dataset,
    profile: NetworkProfile,
    config: SchedulerConfig,
    model: Optional[ThroughputModel] = None,
) -> SimReport:
    chunks = partition_files(ds, profile, config.k_chunks)
    report = run_simulation(chunks, profile, config, model)
    report.config = {"dataset": ds.name, "files": len(ds.files)}
    return report
