"""Numeric inner loops of the partitioner and the fluid simulator.

Each kernel exists twice: an explicit-loop version compiled with numba's
``@njit`` and a vectorised numpy version. The numba path is used when numba
imports cleanly and ``XFERTUNE_DISABLE_NUMBA`` is unset (or ``0``); set it to
``1`` to force the numpy path. Both paths must agree to the last bit on the
integer kernels and to rounding error on the float ones (see
``tests/test_kernels.py``).

Channel state codes used by the simulator kernels:

    IDLE = 0       no file assigned
    GAP = 1        waiting for the next transfer command (timer)
    RECONNECT = 2  re-establishing a connection (timer)
    TRANSFER = 3   moving bytes
"""

from __future__ import annotations

import os

import numpy as np

IDLE, GAP, RECONNECT, TRANSFER = 0, 1, 2, 3


def _numba_requested() -> bool:
    flag = os.environ.get("XFERTUNE_DISABLE_NUMBA", "0").strip().lower()
    return flag in ("", "0", "false", "no")


# --------------------------------------------------------------------------
# numpy implementations


def bucket_index_np(sizes, thresholds):
    # size equal to a threshold stays in the lower bucket
    return np.searchsorted(np.asarray(thresholds, dtype=np.float64), np.asarray(sizes, dtype=np.float64), side="left").astype(np.int64)


def channel_rates_np(state, sizes, parallelism, buffer_size, rtt, bandwidth, io_cap, k_io):
    active = state == TRANSFER
    n_active = int(active.sum())
    out = np.zeros(state.shape[0], dtype=np.float64)
    if n_active == 0:
        return out
    cap = np.minimum(parallelism[active] * (buffer_size / rtt), min(bandwidth / n_active, io_cap / n_active))
    s = sizes[active]
    out[active] = cap * (s / (s + k_io))
    return out


def next_event_dt_np(state, remaining, rates, timer_end, now):
    dt = np.inf
    xfer = (state == TRANSFER) & (rates > 0)
    if xfer.any():
        dt = float(np.min(remaining[xfer] / rates[xfer]))
    waiting = (state == GAP) | (state == RECONNECT)
    if waiting.any():
        dt = min(dt, float(np.min(timer_end[waiting])) - now)
    return max(dt, 0.0)


def advance_np(state, remaining, rates, dt):
    xfer = state == TRANSFER
    remaining[xfer] = np.maximum(remaining[xfer] - rates[xfer] * dt, 0.0)


def due_channels_np(state, remaining, rates, timer_end, now, tol):
    xfer_done = (state == TRANSFER) & (remaining <= rates * tol)
    timer_done = ((state == GAP) | (state == RECONNECT)) & (timer_end <= now + tol)
    return np.flatnonzero(xfer_done | timer_done).astype(np.int64)


# --------------------------------------------------------------------------
# loop implementations (numba-compiled when available)


def _bucket_index_loop(sizes, thresholds):
    n = sizes.shape[0]
    out = np.empty(n, dtype=np.int64)
    m = thresholds.shape[0]
    for i in range(n):
        b = 0
        s = sizes[i]
        while b < m and s > thresholds[b]:
            b += 1
        out[i] = b
    return out


def _channel_rates_loop(state, sizes, parallelism, buffer_size, rtt, bandwidth, io_cap, k_io):
    n = state.shape[0]
    out = np.zeros(n, dtype=np.float64)
    n_active = 0
    for i in range(n):
        if state[i] == TRANSFER:
            n_active += 1
    if n_active == 0:
        return out
    share = min(bandwidth / n_active, io_cap / n_active)
    per_stream = buffer_size / rtt
    for i in range(n):
        if state[i] == TRANSFER:
            cap = min(parallelism[i] * per_stream, share)
            out[i] = cap * (sizes[i] / (sizes[i] + k_io))
    return out


def _next_event_dt_loop(state, remaining, rates, timer_end, now):
    dt = np.inf
    for i in range(state.shape[0]):
        st = state[i]
        if st == TRANSFER:
            if rates[i] > 0:
                t = remaining[i] / rates[i]
                if t < dt:
                    dt = t
        elif st == GAP or st == RECONNECT:
            t = timer_end[i] - now
            if t < dt:
                dt = t
    if dt < 0.0:
        dt = 0.0
    return dt


def _advance_loop(state, remaining, rates, dt):
    for i in range(state.shape[0]):
        if state[i] == TRANSFER:
            r = remaining[i] - rates[i] * dt
            remaining[i] = r if r > 0.0 else 0.0


def _due_channels_loop(state, remaining, rates, timer_end, now, tol):
    n = state.shape[0]
    out = np.empty(n, dtype=np.int64)
    k = 0
    for i in range(n):
        st = state[i]
        if st == TRANSFER:
            if remaining[i] <= rates[i] * tol:
                out[k] = i
                k += 1
        elif st == GAP or st == RECONNECT:
            if timer_end[i] <= now + tol:
                out[k] = i
                k += 1
    return out[:k]


try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

NUMBA_AVAILABLE = _numba is not None

if NUMBA_AVAILABLE:
    bucket_index_nb = _numba.njit(cache=True)(_bucket_index_loop)
    channel_rates_nb = _numba.njit(cache=True)(_channel_rates_loop)
    next_event_dt_nb = _numba.njit(cache=True)(_next_event_dt_loop)
    advance_nb = _numba.njit(cache=True)(_advance_loop)
    due_channels_nb = _numba.njit(cache=True)(_due_channels_loop)
else:  # pragma: no cover
    bucket_index_nb = _bucket_index_loop
    channel_rates_nb = _channel_rates_loop
    next_event_dt_nb = _next_event_dt_loop
    advance_nb = _advance_loop
    due_channels_nb = _due_channels_loop

USE_NUMBA = NUMBA_AVAILABLE and _numba_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"

if USE_NUMBA:
    bucket_index = bucket_index_nb
    channel_rates = channel_rates_nb
    next_event_dt = next_event_dt_nb
    advance = advance_nb
    due_channels = due_channels_nb
else:
    bucket_index = bucket_index_np
    channel_rates = channel_rates_np
    next_event_dt = next_event_dt_np
    advance = advance_np
    due_channels = due_channels_np


def classify_sizes(sizes, thresholds) -> np.ndarray:
    """Bucket index of every size against an increasing threshold ladder."""
    sizes = np.ascontiguousarray(sizes, dtype=np.float64)
    thresholds = np.ascontiguousarray(thresholds, dtype=np.float64)
    return bucket_index(sizes, thresholds)
