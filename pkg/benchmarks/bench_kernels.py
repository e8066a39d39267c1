"""Compare the numba kernels against the pure-NumPy fallback.

Backend selection happens when ``obdgate._kernels`` is imported, driven by
the ``OBDGATE_NUMBA`` environment variable, so each backend is timed in its
own subprocess.  Two workloads:

* micro: the two kernels on synthetic inputs (thousands of calls)
* end-to-end: destination inference with a wide beam on a 6x6 grid

Run from the repository root:

    python3 benchmarks/bench_kernels.py
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
import time

_WORKER = """
import json, os, time
import numpy as np

from obdgate import _kernels
from obdgate.pathing import estimate_destination, predict_profile, path_length_m
from obdgate.roadnet import grid_network, random_path

out = {"backend": _kernels.backend_name()}

# warm up so numba's compile time is not charged to the measurement
lens = np.array([200.0, 150.0, 300.0])
lims = np.array([14.0, 16.0, 20.0])
caps = np.array([0.0, 14.0, 16.0, 0.0])
_kernels.profile_speeds(lens, lims, caps, 2.0, 1.0)
_kernels.score_profile(np.ones(50), np.ones(60), 5.0, 3.0, 0.05)

rng = np.random.default_rng(0)
micro_inputs = []
for _ in range(400):
    n = int(rng.integers(2, 24))
    lens = rng.uniform(80.0, 400.0, n)
    lims = rng.uniform(10.0, 22.0, n)
    caps = np.minimum.reduce([np.append(lims, lims[-1]), np.insert(lims, 0, lims[0])])
    caps[rng.random(n + 1) < 0.3] = 0.0
    caps[0] = caps[-1] = 0.0
    micro_inputs.append((lens, lims, caps))

t0 = time.perf_counter()
for lens, lims, caps in micro_inputs:
    for _ in range(10):
        _kernels.profile_speeds(lens, lims, caps, 2.0, 1.0)
out["profile_speeds_s"] = time.perf_counter() - t0

traces = [rng.uniform(0.0, 20.0, int(rng.integers(60, 240))) for _ in range(400)]
profiles = [rng.uniform(0.0, 20.0, int(rng.integers(60, 240))) for _ in range(400)]
t0 = time.perf_counter()
for tr in traces:
    for pf in profiles[:10]:
        _kernels.score_profile(tr, pf, 5.0, 3.0, 0.05)
out["score_profile_s"] = time.perf_counter() - t0

rng = np.random.default_rng(1)
net = grid_network(6, 6, rng)
cases = []
for _ in range(8):
    path = random_path(net, "n0_0", rng, min_length_m=2000.0)
    cases.append((predict_profile(net, path), path[-1], path_length_m(net, path)))
t0 = time.perf_counter()
for trace, dest, travelled in cases:
    estimate_destination(trace, "n0_0", net, beam_width=64,
                         actual=dest, actual_travelled_m=travelled)
out["estimate_destination_s"] = time.perf_counter() - t0

print(json.dumps(out))
"""


def run_backend(numba_flag: str) -> dict:
    env = dict(os.environ, OBDGATE_NUMBA=numba_flag)
    started = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-c", _WORKER], env=env, capture_output=True, text=True, check=True
    )
    result = json.loads(proc.stdout.strip().splitlines()[-1])
    result["wall_s"] = time.perf_counter() - started  # includes import + any JIT compile
    return result


def main() -> None:
    numba = run_backend("1")
    numpy_only = run_backend("0")
    print(f"{'workload':<28} {'numba':>10} {'numpy':>10} {'speedup':>9}")
    for key, label in (
        ("profile_speeds_s", "profile_speeds (4000x)"),
        ("score_profile_s", "score_profile (4000x)"),
        ("estimate_destination_s", "estimate_destination (8x)"),
        ("wall_s", "process wall (incl. JIT)"),
    ):
        ratio = numpy_only[key] / numba[key] if numba[key] else float("inf")
        print(f"{label:<28} {numba[key]:>9.3f}s {numpy_only[key]:>9.3f}s {ratio:>8.1f}x")
    print(f"\nbackends confirmed: {numba['backend']} vs {numpy_only['backend']}")
    if numba["backend"] != "numba":
        print("warning: numba backend unavailable; compared numpy against itself")


if __name__ == "__main__":
    main()
