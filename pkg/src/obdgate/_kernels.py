"""Numeric kernels for the destination-inference attack.

Two implementations of each kernel: a numba ``@njit`` version and a plain
NumPy/Python fallback.  Selection happens at import time: set
``OBDGATE_NUMBA=0`` to force the fallback, otherwise numba is used whenever
it imports cleanly.  ``backend_name()`` reports which one is live, and the
benchmark in ``benchmarks/bench_kernels.py`` compares the two.

Kernels work in SI units (m, m/s, s).

``profile_speeds``: closed-form kinematic speed profile along a sequence of
edges under a constant-acceleration model.  ``caps`` holds the speed ceiling
at each node boundary (0 at stops, min of adjacent limits otherwise); a
backward pass tightens each cap so the following caps stay reachable under
braking, then each edge is split into accelerate/cruise/brake phases and
sampled on a fixed grid.

``score_profile``: RMSE between a trace and a candidate profile over their
common prefix, plus penalties for mismatched low-speed-run counts (stop
events are the attack's anchor signal) and for length mismatch.
"""

from __future__ import annotations

import math
import os

import numpy as np


def _profile_speeds_py(
    lens: np.ndarray,  # edge lengths, m
    lims: np.ndarray,  # edge speed limits, m/s
    caps: np.ndarray,  # node boundary speed ceilings, m/s; len = len(lens)+1
    accel: float,
    sample_dt: float,
) -> np.ndarray:
    n = lens.shape[0]
    if n == 0:
        return np.zeros(1)
    # backward pass: a cap is reachable only if braking from it can honor
    # every later cap
    b = caps.copy()
    for i in range(n - 1, -1, -1):
        limit_brake = math.sqrt(b[i + 1] * b[i + 1] + 2.0 * accel * lens[i])
        if b[i] > limit_brake:
            b[i] = limit_brake
    # forward pass: entry speeds, then accelerate/cruise/brake split per edge
    t_acc = np.empty(n)
    t_cru = np.empty(n)
    t_brk = np.empty(n)
    v_in_arr = np.empty(n)
    v_peak_arr = np.empty(n)
    v_out_arr = np.empty(n)
    v_in = b[0]
    total_t = 0.0
    for i in range(n):
        v_reach = math.sqrt(v_in * v_in + 2.0 * accel * lens[i])
        v_out = v_reach if v_reach < b[i + 1] else b[i + 1]
        v_peak = math.sqrt((2.0 * accel * lens[i] + v_in * v_in + v_out * v_out) / 2.0)
        if v_peak > lims[i]:
            v_peak = lims[i]
        d_acc = (v_peak * v_peak - v_in * v_in) / (2.0 * accel)
        d_brk = (v_peak * v_peak - v_out * v_out) / (2.0 * accel)
        d_cru = lens[i] - d_acc - d_brk
        if d_cru < 0.0:
            d_cru = 0.0
        t_acc[i] = (v_peak - v_in) / accel
        t_brk[i] = (v_peak - v_out) / accel
        t_cru[i] = d_cru / v_peak if v_peak > 0.0 else 0.0
        v_in_arr[i] = v_in
        v_peak_arr[i] = v_peak
        v_out_arr[i] = v_out
        total_t += t_acc[i] + t_cru[i] + t_brk[i]
        v_in = v_out
    n_samples = int(math.floor(total_t / sample_dt)) + 1
    out = np.empty(n_samples)
    edge = 0
    t_edge_start = 0.0
    for k in range(n_samples):
        t = k * sample_dt
        while edge < n - 1 and t >= t_edge_start + t_acc[edge] + t_cru[edge] + t_brk[edge]:
            t_edge_start += t_acc[edge] + t_cru[edge] + t_brk[edge]
            edge += 1
        dt = t - t_edge_start
        if dt <= t_acc[edge]:
            v = v_in_arr[edge] + accel * dt
        elif dt <= t_acc[edge] + t_cru[edge]:
            v = v_peak_arr[edge]
        else:
            v = v_peak_arr[edge] - accel * (dt - t_acc[edge] - t_cru[edge])
        if v < 0.0:
            v = 0.0
        out[k] = v
    return out


def _score_profile_loops(
    trace: np.ndarray,
    profile: np.ndarray,
    low_threshold: float,
    stop_penalty: float,
    length_penalty: float,
) -> float:
    m = trace.shape[0]
    n = profile.shape[0]
    L = m if m < n else n
    if L == 0:
        return 1e18
    sq = 0.0
    runs_t = 0
    runs_p = 0
    in_t = False
    in_p = False
    for i in range(L):
        d = trace[i] - profile[i]
        sq += d * d
        low_t = trace[i] < low_threshold
        low_p = profile[i] < low_threshold
        if low_t and not in_t:
            runs_t += 1
        if low_p and not in_p:
            runs_p += 1
        in_t = low_t
        in_p = low_p
    rmse = math.sqrt(sq / L)
    run_diff = runs_t - runs_p
    if run_diff < 0:
        run_diff = -run_diff
    return rmse + stop_penalty * run_diff + length_penalty * abs(m - n)


def _score_profile_np(
    trace: np.ndarray,
    profile: np.ndarray,
    low_threshold: float,
    stop_penalty: float,
    length_penalty: float,
) -> float:
    L = min(trace.shape[0], profile.shape[0])
    if L == 0:
        return 1e18
    a, b = trace[:L], profile[:L]
    rmse = float(np.sqrt(np.mean((a - b) ** 2)))
    low_a = a < low_threshold
    low_b = b < low_threshold
    runs_a = int(np.count_nonzero(low_a & ~np.concatenate(([False], low_a[:-1]))))
    runs_b = int(np.count_nonzero(low_b & ~np.concatenate(([False], low_b[:-1]))))
    return rmse + stop_penalty * abs(runs_a - runs_b) + length_penalty * abs(
        trace.shape[0] - profile.shape[0]
    )


def _want_numba() -> bool:
    return os.environ.get("OBDGATE_NUMBA", "1").strip().lower() not in ("0", "false", "no")


_BACKEND = "numpy"
if _want_numba():
    try:
        from numba import njit

        profile_speeds = njit(cache=True)(_profile_speeds_py)
        score_profile = njit(cache=True)(_score_profile_loops)
        _BACKEND = "numba"
    except ImportError:
        profile_speeds = _profile_speeds_py
        score_profile = _score_profile_np
else:
    profile_speeds = _profile_speeds_py
    score_profile = _score_profile_np


def backend_name() -> str:
    """Which kernel backend is active: ``numba`` or ``numpy``."""
    return _BACKEND
